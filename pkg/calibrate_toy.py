"""Scratch calibration for the toy overfit experiment (deleted before ship)."""
import sys, time, tempfile, pathlib
from dataclasses import replace
import numpy as np
import signmotion as sm
from signmotion.synthetic import write_toy_dataset, toy_gloss_list
from signmotion.training import TrainConfig, train
from signmotion.model import ModelConfig
from signmotion.classifier import ClassifierConfig, train_classifier, accuracy
from signmotion.embeddings import EmbeddingService, ProviderConfig

D_EMB = 64
MODEL = dict(pose_dim=312, d_emb=D_EMB, d_model=64, n_heads=4, n_enc_layers=2,
             n_dec_layers=2, d_ff=128, dropout=0.0, d_latent=16, max_T=40)

def run(epochs=300, lr=1e-3, w_kl=1e-3, seed=0, curriculum=True, mask_step=500, batch=8, **model_kw):
    t0 = time.time()
    tmp = pathlib.Path(tempfile.mkdtemp())
    write_toy_dataset(tmp / "data", n_words=5, samples_per_word=8, t=30, seed=0)
    man = sm.load_manifest(tmp / "data/manifest.json")
    man.records = [replace(r, split="train") for r in man.records]
    svc = EmbeddingService(ProviderConfig(provider="stub", d_emb=D_EMB))
    mc = ModelConfig(**{**MODEL, **model_kw})
    tc = TrainConfig(epochs=epochs, batch_size=batch, learning_rate=lr, w_kl=w_kl, seed=seed,
                     curriculum_enabled=curriculum, checkpoint_every=10000,
                     mask_step=mask_step, mask_increment=0.1, mask_cap=0.6)
    res = train(man, mc, tc, svc, tmp / "run")
    t_train = time.time() - t0
    model = res.model

    motions = [sm.read_container(r.source_path) for r in man.records]
    labels = [m.gloss for m in motions]
    t0 = time.time()
    clf = train_classifier(motions, labels, seed=seed,
                           config=ClassifierConfig(hidden=16, n_blocks=2, epochs=40, n_frames=30))
    t_clf = time.time() - t0
    raw_acc = accuracy(clf, motions, labels)

    conds = {w: svc.embed_text(w) for w in toy_gloss_list(5)}
    recs = [model.reconstruct(m, conds[m.gloss], seed=100 + i) for i, m in enumerate(motions)]
    rec_acc = accuracy(clf, recs, labels)
    rec_losses = [sm.reconstruction_loss(sm.convert_channels(m, "sixd"), r) for m, r in zip(motions, recs)]

    gens, gen_labels = [], []
    for w in toy_gloss_list(5):
        for i in range(8):
            gens.append(model.generate(conds[w], 30, seed=1000 + len(gens)))
            gen_labels.append(w)
    gen_acc = accuracy(clf, gens, gen_labels)

    print(f"epochs={epochs} lr={lr} w_kl={w_kl} curr={curriculum} seed={seed} | "
          f"train {t_train:.0f}s clf {t_clf:.0f}s | final rec loss {res.rows[-1]['rec_loss']:.3f} "
          f"kl {res.rows[-1]['kl_loss']:.2f} | raw_acc {raw_acc:.2f} rec_acc {rec_acc:.2f} "
          f"gen_acc {gen_acc:.2f} | mean item rec {np.mean(rec_losses):.3f}")
    return dict(rec_acc=rec_acc, gen_acc=gen_acc, rec_loss=np.mean(rec_losses))

if __name__ == "__main__":
    for arg in sys.argv[1:]:
        exec(arg)
