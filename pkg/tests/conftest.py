import pytest

from windowbench.config import from_dict
from windowbench.dataset import prepare_dataset
from windowbench.ehr import load_corpus
from windowbench.synth import generate

SMALL_RUN = {
    "seed": 3,
    "synth": {"n_patients": 240, "prevalence_hip": 0.25, "prevalence_knee": 0.25, "exclusion_rates": [0.0, 0.0, 0.0]},
    "text": {"min_df": 2},
    "neural": {"embed_dim": 8, "hidden_dim": 6, "attn_dim": 4, "lr": 0.5, "batch_size": 16, "max_epochs": 3},
    "lda": {"k": 4, "gibbs_iters": 20, "burn_in": 10, "thin": 5, "infer_iters": 10},
    "sweep": {"windows": ["0", "3"], "roster": ["LR+BOW+norm=l2"], "bootstrap": 50},
}


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Path of a small generated corpus shared by the sweep, report and CLI tests."""
    cfg = from_dict(SMALL_RUN)
    d = tmp_path_factory.mktemp("corpus")
    generate(cfg.synth, d, overwrite=True)
    return d


@pytest.fixture(scope="session")
def small_run(small_corpus):
    raw = dict(SMALL_RUN, paths={"corpus": str(small_corpus)})
    cfg = from_dict(raw)
    ds = prepare_dataset(load_corpus(small_corpus), cfg.cohort.criteria(), seed=cfg.seed)
    return cfg, ds
