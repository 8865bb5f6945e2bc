"""kbsim: desk-scale simulator of kernel-bypass vs. kernel-stack networking."""

__version__ = "0.1.0"
REPORT_SCHEMA_VERSION = "1"
