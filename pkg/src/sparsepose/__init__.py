"""Full-body pose from head and hand trackers: transformer regression, FK and arm IK."""

__version__ = "0.1.0"
