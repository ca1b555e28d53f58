"""RadioMamba: hybrid selective-scan / convolution U-Net for radio map construction."""

__version__ = "0.1.0"
