"""State-space machinery: static SSM, the scan monoid and the selective scan."""

from .scan import ScanElement, combine, identity, scan_chunked, scan_doubling, scan_sequential
from .selective import (
    MODES,
    SelectiveParams,
    selective_discretize,
    selective_parameters,
    selective_scan,
    selective_scan_parallel,
    selective_scan_sequential,
)
from .static import (
    DiscreteSsm,
    DomainError,
    SsmParams,
    discretize_zoh,
    ssm_kernel,
    ssm_kernel_apply,
    ssm_scan_recurrent,
)

__all__ = [
    "MODES", "DiscreteSsm", "DomainError", "ScanElement", "SelectiveParams", "SsmParams", "combine",
    "discretize_zoh", "identity", "scan_chunked", "scan_doubling", "scan_sequential",
    "selective_discretize", "selective_parameters", "selective_scan", "selective_scan_parallel",
    "selective_scan_sequential", "ssm_kernel", "ssm_kernel_apply", "ssm_scan_recurrent",
]
