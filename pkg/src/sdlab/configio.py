"""Plain-text run configuration: key = value lines under [section] headers.

Environment variables override file values: SDLAB_<SECTION>_<KEY>=value
(section and key uppercased, e.g. SDLAB_DISTILL_CANDIDATES=5). A --seed
CLI flag overrides run.seed_base on top of both.
"""

import configparser
import os

ENV_PREFIX = "SDLAB_"


def load_config(path):
    """Parse the config file into {section: {key: str}} with env overrides."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        cp.read_file(fh)
    cfg = {s: dict(cp.items(s)) for s in cp.sections()}
    for name, val in os.environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        if "_" not in rest:
            continue
        section, key = rest.split("_", 1)
        cfg.setdefault(section.lower(), {})[key.lower()] = val
    return cfg


def get(cfg, section, key, default=None, cast=str):
    try:
        raw = cfg[section][key]
    except KeyError:
        return default
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if cast is list:
        return [v.strip() for v in raw.split(",") if v.strip()]
    return cast(raw)
