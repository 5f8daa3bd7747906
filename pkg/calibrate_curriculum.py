"""Scratch calibration for the curriculum directional check (deleted before ship)."""
import sys, time, tempfile, pathlib
import numpy as np
import signmotion as sm
from signmotion.synthetic import write_toy_dataset, toy_gloss_list
from signmotion.training import TrainConfig, train
from signmotion.model import ModelConfig
from signmotion.classifier import ClassifierConfig, train_classifier
from signmotion.embeddings import EmbeddingService, ProviderConfig

D_EMB = 64
MODEL = dict(pose_dim=312, d_emb=D_EMB, d_model=128, n_heads=4, n_enc_layers=3,
             n_dec_layers=3, d_ff=256, dropout=0.0, d_latent=8, max_T=40)


def gen_fid(seed, curriculum, mask_step=60, epochs=300, lr=1.5e-3, w_kl=5e-4, gens_per_word=8):
    tmp = pathlib.Path(tempfile.mkdtemp())
    write_toy_dataset(tmp / "data", n_words=5, samples_per_word=8, t=30, seed=0)
    man = sm.load_manifest(tmp / "data/manifest.json")
    man = sm.make_split(man, 0.8, seed=0)
    svc = EmbeddingService(ProviderConfig(provider="stub", d_emb=D_EMB))
    tc = TrainConfig(epochs=epochs, batch_size=4, learning_rate=lr, w_kl=w_kl, seed=seed,
                     curriculum_enabled=curriculum, checkpoint_every=100000,
                     mask_step=mask_step, mask_increment=0.1, mask_cap=0.6)
    res = train(man, ModelConfig(**MODEL), tc, svc, tmp / "run")
    model = res.model

    train_m = [sm.read_container(r.source_path) for r in man.split_records("train")]
    test_m = [sm.read_container(r.source_path) for r in man.split_records("test")]
    clf = train_classifier(train_m, [m.gloss for m in train_m], seed=seed,
                           config=ClassifierConfig(hidden=16, n_blocks=2, epochs=40, n_frames=30))
    gens = []
    k = 0
    for w in toy_gloss_list(5):
        cond = svc.embed_text(w)
        for i in range(gens_per_word):
            gens.append(model.generate(cond, 30, seed=5000 + k)); k += 1
    return sm.fid(clf.features(gens), clf.features(test_m))


if __name__ == "__main__":
    kw = {}
    for arg in sys.argv[1:]:
        k, v = arg.split("=")
        kw[k] = float(v) if "." in v else int(v)
    for seed in (0, 1, 2):
        t0 = time.time()
        f_c = gen_fid(seed, True, **kw)
        f_n = gen_fid(seed, False, **kw)
        flag = "CURR<=NOCURR" if f_c <= f_n else "WORSE"
        print(f"seed {seed}: fid_curr={f_c:.3f} fid_nocurr={f_n:.3f} {flag} ({time.time()-t0:.0f}s)")
