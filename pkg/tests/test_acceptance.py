"""Acceptance suite: one test per primary criterion, each at its stated tolerance.

A PASS/FAIL/SKIP line per criterion is printed in the terminal summary.
"""

import math
import os
import time
import warnings

import numpy as np
import pytest

from acceptance_log import criterion
from conftest import random_triples
from oracles import brute_force_subgraph, exhaustive_search
from test_autodiff import OPS, projected
from test_decoder import BOS, PrefixModel, random_table, run_beam, two_step_table
from test_encoder import layer_params, sample_graph
from mgcn import autodiff as ad
from mgcn.cli import GRADCHECK_INSTANCE, generate_texts, gradcheck_error
from mgcn.config import TrainConfig
from mgcn.decoder import greedy_search
from mgcn.encoder import basic_encode, mgcn_layer
from mgcn.graphs import ALL_LABELS, drop_graphs, permute_nodes, to_levi, to_multigraph
from mgcn.kg import build_graph, dataset_stats, dedup_triples, extract_subgraph, read_instances, synth_corpus
from mgcn.metrics import bleu, rouge_l, rouge_n
from mgcn.model import MGCNModel
from mgcn.preprocess import build_vocab
from mgcn.training import decode_checkpoint, encode_checkpoint, load, perplexity, save, train

S, D1, R1, D2, R2, G = ALL_LABELS

# full-model gradient check point: the CLI's default gradcheck configuration
GRADCHECK_BASE = dict(hidden=4, layers=2, init_scale=0.5, embed_scale=0.5, seed=0)


def test_c01_multigraph_laws():
    with criterion(1, "multi-graph structure laws on 1000 random triple sets") as out:
        start = time.perf_counter()
        rng = np.random.default_rng(20240101)
        for _ in range(1000):
            triples = dedup_triples(random_triples(rng, max_nodes=30, max_triples=50))
            E = len({x for t in triples for x in (t.subject, t.object)})
            M = len(triples)
            mg = to_multigraph(triples)
            assert mg.num_nodes == E + M + 1
            assert len(mg.edges(S)) == E + M + 1
            assert len(mg.edges(D1)) == len(mg.edges(R1)) == 2 * M
            assert len(mg.edges(D2)) == len(mg.edges(R2)) == len({(t.subject, t.object) for t in triples})
            assert len(mg.edges(G)) == E + M
            assert mg.edge_set(R1) == {(b, a) for a, b in mg.edge_set(D1)}
            assert mg.edge_set(R2) == {(b, a) for a, b in mg.edge_set(D2)}
            levi = to_levi(triples)
            assert {(int(a), int(b)) for a, b in levi.edges} == mg.edge_set(D1)
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0
        out["note"] = f"{elapsed:.1f}s"


def test_c02_subgraph_oracle():
    with criterion(2, "subgraph extraction equals brute-force path enumeration") as out:
        start = time.perf_counter()
        rng = np.random.default_rng(77)
        for _ in range(1000):
            kg = build_graph(random_triples(rng, max_nodes=12, max_triples=14))
            main = kg.entities[int(rng.integers(len(kg.entities)))]
            topics = [e for e in kg.entities if e != main and rng.random() < 0.3]
            got, _ = extract_subgraph(kg, main, topics)
            want = brute_force_subgraph([tuple(t) for t in kg.triples], main, topics, 2)
            assert {tuple(t) for t in got} == want
        elapsed = time.perf_counter() - start
        assert elapsed < 30.0
        out["note"] = f"{elapsed:.1f}s"


def test_c03_gradient_integrity():
    with criterion(3, "gradient checks: ops, MGCN layers, end-to-end model") as out:
        start = time.perf_counter()
        worst = {}
        for name, build in OPS.items():
            for point in range(10):
                rng = np.random.default_rng(100 + point)
                params, fn = build(rng)
                with ad.no_grad():
                    r = rng.normal(size=fn().shape)
                err = ad.grad_check(lambda: projected(fn(), r), params)
                worst["ops"] = max(worst.get("ops", 0.0), err)
        mg = sample_graph(11)
        for kind in ("sum", "avg", "conv"):
            rng = np.random.default_rng(11)
            h = ad.Parameter(rng.normal(size=(mg.num_nodes, 3)), "h")
            p = layer_params(rng, 3, kind)
            r = rng.normal(size=(mg.num_nodes, 3))
            params = [h, p.conv_W, p.conv_b] if kind == "conv" else [h]
            for l in ALL_LABELS:
                params += [p.graphs[l].W, p.graphs[l].b]
            worst[f"layer-{kind}"] = ad.grad_check(lambda: ad.sum(ad.mul(mgcn_layer(mg, h, p), r)), params)
        assert to_multigraph(GRADCHECK_INSTANCE.triples).num_nodes == 4
        for kind in ("sum", "avg", "conv"):
            worst[f"model-{kind}"] = gradcheck_error(TrainConfig(aggregation=kind, **GRADCHECK_BASE))
        elapsed = time.perf_counter() - start
        out["note"] = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.0f}s"
        assert max(worst.values()) < 1e-4, out["note"]
        assert elapsed < 120.0


def test_c04_aggregation_identities():
    with criterion(4, "aggregation identities hold exactly"):
        for seed in range(30):
            rng = np.random.default_rng(seed)
            mg = to_multigraph(dedup_triples(random_triples(rng, max_nodes=8, max_triples=10)))
            h = rng.normal(size=(mg.num_nodes, 5))
            p = layer_params(rng, 5)
            total = mgcn_layer(mg, h, p).data
            p.aggregation = "avg"
            assert np.array_equal(mgcn_layer(mg, h, p).data, total / 6)
            p.aggregation = "conv"
            p.conv_W = ad.Tensor(np.ones((6, 5)))
            p.conv_b = ad.Tensor(np.zeros(5))
            assert mgcn_layer(mg, h, p).data.tobytes() == total.tobytes()
            single = drop_graphs(mg, {D1, R1, D2, R2, G})
            p.aggregation = "sum"
            assert np.array_equal(mgcn_layer(single, h, p).data, basic_encode(mg.adjacency[S], h, p.graphs[S]).data)


def test_c05_permutation():
    with criterion(5, "permutation equivariance of encoder, invariance of loss and beam output") as out:
        max_loss_gap = 0.0
        for trial in range(100):
            inst = synth_corpus(trial, n_instances=1, n_entities=12, n_relations=4, triples_per_instance=4)[0]
            model = MGCNModel.create(TrainConfig(hidden=6, layers=2, seed=trial, init_scale=0.3), build_vocab([inst]))
            mg = model.graph_for(inst)
            perm = np.random.default_rng(trial).permutation(mg.num_nodes)
            pmg = permute_nodes(mg, perm)
            a = model.prepare(mg, inst.tokens)
            b = model.prepare(pmg, inst.tokens)
            with ad.no_grad():
                mem_a, _ = model.encode([a])
                mem_b, _ = model.encode([b])
                assert np.array_equal(mem_b.data[0][perm], mem_a.data[0])
                la, lb = model.batch_loss([a])[0].item(), model.batch_loss([b])[0].item()
            max_loss_gap = max(max_loss_gap, abs(la - lb) / abs(la))
            assert math.isclose(la, lb, rel_tol=1e-12)
            assert model.search(a, beam=3, max_len=12).tokens == model.search(b, beam=3, max_len=12).tokens
        out["note"] = f"encoder bitwise; max relative loss gap {max_loss_gap:.1e}"


def test_c06_overfit():
    with criterion(6, "overfit 16 synthetic instances: perplexity < 1.05, exact beam-10 outputs") as out:
        start = time.perf_counter()
        corpus = synth_corpus(3, n_instances=16, n_entities=40, n_relations=8, triples_per_instance=6)
        config = TrainConfig(hidden=64, layers=2, aggregation="sum", lr=3e-4, batch_size=16, max_epochs=500, patience=500, seed=0, beam=10)
        result = train(config, corpus, corpus)
        model = result.checkpoint.model()
        ppl = perplexity(model, corpus)
        exact = sum(model.generate_tokens(model.graph_for(x), beam=10) == x.tokens for x in corpus)
        elapsed = time.perf_counter() - start
        out["note"] = f"perplexity {ppl:.4f}, {exact}/16 exact, {elapsed:.0f}s"
        assert ppl < 1.05, out["note"]
        assert exact == 16, out["note"]
        assert elapsed < 300.0, out["note"]


def test_c07_beam_search():
    with criterion(7, "beam search: greedy at beam 1, exhaustive at full width, two-step example"):
        for seed in range(60):
            rng = np.random.default_rng(seed)
            vocab, max_len = int(rng.integers(2, 6)), int(rng.integers(1, 4))
            eos = int(rng.integers(vocab))
            fn = random_table(seed, vocab, eos)
            model = PrefixModel(fn, max_len)
            greedy = greedy_search(model.step, model.start(), BOS, eos, max_len=max_len)
            assert run_beam(model, eos, 1, max_len).tokens == greedy.tokens
            tokens, lp = exhaustive_search(fn, vocab, eos, max_len)
            full = run_beam(model, eos, vocab**max_len, max_len)
            assert full.tokens == tokens and math.isclose(full.logprob, lp, abs_tol=1e-12)
        fn, a, b, c, eos = two_step_table()
        model = PrefixModel(fn, 2)
        assert greedy_search(model.step, model.start(), BOS, eos, max_len=2).tokens[0] == a
        for k in (2, 5):
            assert run_beam(model, eos, k, 2).tokens == (b, c)


def test_c08_metric_oracles():
    with criterion(8, "metric oracles"):
        s = "the quick brown fox jumps".split()
        assert bleu([s], [s]) == 100.0
        assert rouge_n(s, s, 1)[2] == rouge_n(s, s, 2)[2] == rouge_l(s, s)[2] == 1.0
        assert abs(bleu([list("abcd")], [list("abcde")]) - 100 * math.exp(-0.25)) <= 0.01
        assert abs(rouge_l(list("abc"), list("acb"))[2] - 2 / 3) <= 1e-9


def test_c09_ablation_harness(tmp_path):
    with criterion(9, "ablation harness: each non-self graph removed") as out:
        # held-out split with delexicalization, so scores reflect more than memorisation
        corpus = synth_corpus(5, n_instances=64, n_entities=40, n_relations=8, triples_per_instance=6)
        train_set, test_set = corpus[:48], corpus[48:]
        refs = [x.tokens for x in test_set]
        base = dict(hidden=32, layers=2, max_epochs=100, patience=10, batch_size=16, lr=1e-3, seed=0, beam=3, max_len=40, delex=True)
        scores = {}
        for dropped in [None] + [l for l in ALL_LABELS if l is not S]:
            name = dropped.value if dropped else "full"
            graphs = tuple(l.value for l in ALL_LABELS if l is not dropped)
            result = train(TrainConfig(graphs=graphs, **base), train_set, test_set)
            path = tmp_path / f"{name}.ckpt"
            save(result.checkpoint, path)
            ckpt = load(path)
            assert ckpt.equals(result.checkpoint)
            assert list(ckpt.config.active_labels) == [l for l in ALL_LABELS if l is not dropped]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)  # unmapped placeholders stay verbatim
                cands = [t.split() for t in generate_texts(ckpt, test_set)]
            scores[name] = bleu(cands, refs)
        full = scores.pop("full")
        out["note"] = f"held-out BLEU full {full:.1f}; " + ", ".join(
            f"-{k} {v:.1f} ({'down' if v < full else 'up' if v > full else 'same'})" for k, v in scores.items()
        )


def test_c10_determinism_and_persistence(tmp_path):
    with criterion(10, "identical seeded runs are byte-identical; save/load bitwise"):
        corpus = synth_corpus(8, n_instances=8, n_entities=20, n_relations=4, triples_per_instance=4)
        runs = []
        for name in ("a", "b"):
            config = TrainConfig(hidden=12, layers=2, max_epochs=4, batch_size=4, seed=11, beam=4, max_len=20)
            result = train(config, corpus[:6], corpus[6:])
            path = tmp_path / f"{name}.ckpt"
            save(result.checkpoint, path)
            model = load(path).model()
            outputs = [" ".join(model.generate_tokens(model.graph_for(x))) for x in corpus]
            runs.append((path.read_bytes(), outputs))
            assert decode_checkpoint(path.read_bytes()).equals(result.checkpoint)
            assert encode_checkpoint(load(path)) == path.read_bytes()
        assert runs[0] == runs[1]


ENT_DESC = os.environ.get("MGCN_ENTDESC")


def test_c11_entdesc_statistics():
    with criterion(11, "ENT-DESC statistics (avg triples 27.4, avg words 31.0)") as out:
        if not ENT_DESC:
            pytest.skip("set MGCN_ENTDESC to an instance file of the released corpus")
        stats = dataset_stats(read_instances(ENT_DESC))
        out["note"] = f"avg triples {stats.avg_triples:.2f}, avg words {stats.avg_words:.2f}"
        assert abs(stats.avg_triples - 27.4) <= 0.1, out["note"]
        assert abs(stats.avg_words - 31.0) <= 0.5, out["note"]
