"""Run configuration: the default YAML document and its dataclass loader."""
