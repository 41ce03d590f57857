"""End-to-end acceptance checks, one numbered test per shipping criterion.

Every test computes its verdict first, reports it through the ``criterion``
fixture (the summary banner prints one line per number at the end of the
run), and only then asserts. Oracles are written from scratch in this file
on purpose, so a bug in the library's own helpers cannot hide itself.
"""

import os
import time
from pathlib import Path

import numpy as np

from fedmoeac.config import ExperimentConfig
from fedmoeac.data import Dataset, gen_synthetic, load_mnist_idx, write_idx_images, write_idx_labels
from fedmoeac.evolution import Solution, fast_nondominated_sort, hierarchical_cluster
from fedmoeac.federated import (
    FederatedState,
    ObjectiveSettings,
    advance_round,
    aggregate,
    apply_solution,
    evaluate_objectives,
    partition_dataset,
    run_round,
)
from fedmoeac.metrics import hypervolume
from fedmoeac.nn import Batch, LayerWeights, ModelWeights, backward, evaluate, forward, init_mlp
from fedmoeac.operators import (
    CompressionParams,
    PrivacyAccountant,
    clip_and_noise,
    privacy_budget,
    quantize_dequantize,
)
from fedmoeac.runner import pair_trajectories, run_search, split_holdout, write_run_outputs

FD_STEP = 1e-5
GRAD_TOL = 1e-4
ROUNDTRIP_TOL = 1e-6
BUDGET_ANCHOR = 6.9263
BUDGET_TOL = 1e-3
NOISE_STD_TOL = 0.02
MC_SAMPLES = 10_000_000
MC_CHUNK = 1_000_000
MC_REL_TOL = 0.01

# The one configuration the search comparison is scored on. Tuned once and
# frozen; see the README for why the problem has to be this small.
COMPARISON_CONFIG = dict(
    clients=10,
    participation=0.4,
    population=10,
    generations=12,
    mating_clusters=3,
    holdout_fraction=0.1,
    local_epochs=2,
    batch_size=32,
    learning_rate=0.1,
    synthetic_samples=400,
    synthetic_classes=2,
    synthetic_dim=3,
    synthetic_separation=8.0,
    hidden=(4,),
    clip=0.2,
    mutation_prob=0.3,
    mutation_index=3.0,
    fitness_weights=(1.0, 2.0, 1.0),
)


def _flat_arrays(layers) -> np.ndarray:
    return np.concatenate([a.ravel() for l in layers for a in (l.weights, l.bias)])


def test_backprop_matches_central_differences(criterion):
    """Analytic gradients agree with a central-difference probe of the loss."""
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(10):
        depth = int(rng.integers(2, 4))
        widths = tuple(int(rng.integers(3, 9)) for _ in range(depth + 1))
        model = init_mlp(widths, rng)
        n = int(rng.integers(4, 9))
        batch = Batch(rng.standard_normal((n, widths[0])), rng.integers(0, widths[-1], size=n))

        analytic = _flat_arrays(backward(model, batch).layers)
        base = model.flat()
        probed = np.empty_like(base)
        for i in range(base.size):
            shifted = base.copy()
            shifted[i] = base[i] + FD_STEP
            up = forward(model.with_flat(shifted), batch)[1]
            shifted[i] = base[i] - FD_STEP
            down = forward(model.with_flat(shifted), batch)[1]
            probed[i] = (up - down) / (2.0 * FD_STEP)
        worst = max(worst, float(np.linalg.norm(analytic - probed) / np.linalg.norm(probed)))
    elapsed = time.perf_counter() - start

    ok = worst < GRAD_TOL and elapsed < 10.0
    criterion(1, ok, f"max relative gradient error {worst:.2e} over 10 model/batch pairs ({elapsed:.1f}s)")
    assert worst < GRAD_TOL
    assert elapsed < 10.0


def test_quantization_reconstruction_bound(criterion):
    """Reconstruction error stays within half a quantization step per layer.

    The grid spans each layer's pooled weight and bias range, so that is
    the span the bound is checked against. The first trial uses a constant
    layer (zero span, must pass through untouched) and the second a layer
    holding one weight and one bias far apart.
    """
    rng = np.random.default_rng(202)
    worst_ratio = 0.0
    worst_32 = 0.0
    for trial in range(100):
        rows, cols = int(rng.integers(1, 25)), int(rng.integers(1, 25))
        scale = float(10.0 ** rng.uniform(-2, 2))
        weights = rng.standard_normal((rows, cols)) * scale
        bias = rng.standard_normal(cols) * scale
        if trial == 0:
            weights = np.full((rows, cols), 0.37)
            bias = np.full(cols, 0.37)
        if trial == 1:
            weights, bias = np.array([[scale]]), np.array([-scale])
        model = ModelWeights([LayerWeights(weights, bias)])

        for q in (8, 16, 32):
            rebuilt = quantize_dequantize(model, q)
            for orig, back in zip(model.layers, rebuilt.layers):
                lo = min(float(orig.weights.min()), float(orig.bias.min()))
                hi = max(float(orig.weights.max()), float(orig.bias.max()))
                bound = (hi - lo) / (2.0 * (2.0**q - 1.0)) + 1e-12
                err = max(
                    float(np.abs(orig.weights - back.weights).max()),
                    float(np.abs(orig.bias - back.bias).max()),
                )
                worst_ratio = max(worst_ratio, err / bound)
                if q == 32:
                    worst_32 = max(worst_32, err / max(1.0, abs(hi), abs(lo)))

    ok = worst_ratio <= 1.0 and worst_32 < ROUNDTRIP_TOL
    criterion(2, ok, f"worst error/bound ratio {worst_ratio:.3f}, 32-bit round-trip {worst_32:.2e}")
    assert worst_ratio <= 1.0
    assert worst_32 < ROUNDTRIP_TOL


def test_privacy_budget_value_and_monotonicity(criterion):
    """Hand-checked anchor value plus directional behavior in all four inputs."""
    anchor = privacy_budget(PrivacyAccountant(12, 0.4, 1e-5), 6.0)
    anchor_ok = abs(anchor - BUDGET_ANCHOR) <= BUDGET_TOL

    rng = np.random.default_rng(303)
    violations = 0
    for _ in range(1000):
        t = int(rng.integers(1, 40))
        v = float(rng.uniform(0.05, 1.0))
        delta = float(10.0 ** rng.uniform(-8, -2))
        sigma = float(rng.uniform(0.1, 12.0))
        base = privacy_budget(PrivacyAccountant(t, v, delta), sigma)

        grow = float(rng.uniform(1.1, 1.6))
        if privacy_budget(PrivacyAccountant(t + int(rng.integers(1, 6)), v, delta), sigma) <= base:
            violations += 1
        if privacy_budget(PrivacyAccountant(t, v, delta), sigma * grow) >= base:
            violations += 1
        wider = min(1.0, v * grow)
        if wider > v and privacy_budget(PrivacyAccountant(t, wider, delta), sigma) >= base:
            violations += 1
        if privacy_budget(PrivacyAccountant(t, v, min(0.5, delta * 10.0)), sigma) >= base:
            violations += 1

    ok = anchor_ok and violations == 0
    criterion(3, ok, f"budget anchor {anchor:.4f} (want {BUDGET_ANCHOR}±{BUDGET_TOL}), {violations} direction violations in 1000 draws")
    assert anchor_ok
    assert violations == 0


def test_clip_norm_and_noise_scale(criterion):
    """Clipping respects the norm ball and the noise has the advertised scale."""
    rng = np.random.default_rng(404)
    clip_ok = True
    for _ in range(200):
        widths = (int(rng.integers(2, 6)), int(rng.integers(2, 6)))
        model = init_mlp(widths, rng)
        vec = model.flat()
        target = float(10.0 ** rng.uniform(-2, 2))
        vec = vec * (target / np.linalg.norm(vec))
        model = model.with_flat(vec)
        z = float(10.0 ** rng.uniform(-1.5, 1.5))

        clipped = clip_and_noise(model, z, 0.0, np.random.default_rng(0))
        post = float(np.linalg.norm(clipped.flat()))
        if target > z:
            clip_ok = clip_ok and post <= z * (1.0 + 1e-9)
        else:
            clip_ok = clip_ok and np.array_equal(clipped.flat(), vec)

    sigma, z = 1.6, 0.8
    zeros = ModelWeights([LayerWeights(np.zeros((400, 250)), np.zeros(250))])
    noisy = clip_and_noise(zeros, z, sigma, np.random.default_rng(405))
    std = float(noisy.flat().std())
    std_ok = abs(std / (sigma * z) - 1.0) <= NOISE_STD_TOL

    ok = clip_ok and std_ok
    criterion(4, ok, f"norm bound held on 200 draws: {clip_ok}; noise std {std:.4f} vs {sigma * z:.4f}")
    assert clip_ok
    assert std_ok


def _mc_hypervolume(points: np.ndarray, ref: np.ndarray, rng: np.random.Generator) -> float:
    """Monte-Carlo estimate of the volume dominated between 0 and ref."""
    hits = 0
    for _ in range(MC_SAMPLES // MC_CHUNK):
        samples = rng.uniform(0.0, 1.0, size=(MC_CHUNK, 3)) * ref
        covered = (samples[:, None, :] >= points[None, :, :]).all(axis=2).any(axis=1)
        hits += int(covered.sum())
    return hits / MC_SAMPLES * float(np.prod(ref))


def test_hypervolume_against_monte_carlo(criterion):
    ref = np.array([1.0, 1.0, 1.0])
    exact_cube = hypervolume(np.array([[0.5, 0.5, 0.5]]), ref)
    cube_ok = exact_cube == 0.125

    rng = np.random.default_rng(505)
    worst_rel = 0.0
    for i in range(20):
        count = int(rng.integers(1, 21))
        points = rng.uniform(0.05, 0.6, size=(count, 3))
        exact = hypervolume(points, ref)
        estimate = _mc_hypervolume(points, ref, np.random.default_rng(9000 + i))
        worst_rel = max(worst_rel, abs(exact - estimate) / exact)
    mc_ok = worst_rel < MC_REL_TOL

    grow_ok = True
    points = list(rng.uniform(0.05, 0.9, size=(5, 3)))
    before = hypervolume(np.array(points), ref)
    for _ in range(100):
        points.append(rng.uniform(0.0, 1.0, size=3))
        after = hypervolume(np.array(points), ref)
        grow_ok = grow_ok and after >= before - 1e-12
        before = after

    ok = cube_ok and mc_ok and grow_ok
    criterion(5, ok, f"half-cube {exact_cube!r}; worst MC deviation {worst_rel:.4%} over 20 sets; monotone under 100 insertions: {grow_ok}")
    assert cube_ok
    assert mc_ok
    assert grow_ok


def _peel_fronts(objectives: np.ndarray) -> list[list[int]]:
    def beats(a, b):
        return bool((a <= b).all() and (a < b).any())

    remaining = list(range(len(objectives)))
    fronts = []
    while remaining:
        front = [
            i
            for i in remaining
            if not any(beats(objectives[j], objectives[i]) for j in remaining if j != i)
        ]
        fronts.append(sorted(front))
        remaining = [i for i in remaining if i not in front]
    return fronts


def _peel_clusters(vectors: np.ndarray, target: int, linkage: str) -> set[frozenset]:
    units = []
    for v in vectors:
        norm = float(np.linalg.norm(v))
        units.append(v / norm if norm > 0 else v)
    units = np.array(units)
    clusters = [[i] for i in range(len(units))]
    centers = [units[i].copy() for i in range(len(units))]

    def similarity(i, j):
        if linkage == "centroid":
            return float(centers[i] @ centers[j])
        pairwise = [float(units[a] @ units[b]) for a in clusters[i] for b in clusters[j]]
        return max(pairwise) if linkage == "single" else min(pairwise)

    while len(clusters) > target:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                score = similarity(i, j)
                if best is None or score > best[0]:
                    best = (score, i, j)
        _, i, j = best
        clusters[i] = clusters[i] + clusters[j]
        mean = units[clusters[i]].mean(axis=0)
        norm = float(np.linalg.norm(mean))
        centers[i] = mean / norm if norm > 0 else mean
        del clusters[j]
        del centers[j]
    return {frozenset(c) for c in clusters}


def test_sorting_and_clustering_against_brute_force(criterion):
    """Front peeling and agglomeration agree with quadratic reference code."""
    rng = np.random.default_rng(606)
    front_fails = 0
    for trial in range(50):
        n = int(rng.integers(1, 51))
        objectives = rng.random((n, 3))
        if trial % 2 == 0:
            objectives = objectives.round(1)
        got = [sorted(f) for f in fast_nondominated_sort(objectives)]
        if got != _peel_fronts(objectives):
            front_fails += 1

    cluster_fails = 0
    for trial in range(50):
        n = int(rng.integers(2, 9))
        target = int(rng.integers(1, n + 1))
        vectors = rng.standard_normal((n, 3))
        linkage = ("centroid", "single", "complete")[trial % 3]
        got = {frozenset(c) for c in hierarchical_cluster(vectors, target, linkage).members}
        if got != _peel_clusters(vectors, target, linkage):
            cluster_fails += 1

    ok = front_fails == 0 and cluster_fails == 0
    criterion(6, ok, f"front mismatches {front_fails}/50, clustering mismatches {cluster_fails}/50")
    assert front_fails == 0
    assert cluster_fails == 0


IDENTITY_PARAMS = CompressionParams(xi=0.0, q_bits=32, sigma=0.0, clip_z=1e6)


def _identity_fedavg(state: FederatedState, max_rounds: int, epochs: int, batch_size: int, lr: float, participation: float, target: float):
    """Train with pass-through compression until holdout accuracy hits target.

    Returns (rounds used or None, final accuracy). The processing pipeline
    still runs every round, so this exercises the same path the search
    uses, with knobs set so it changes nothing.
    """
    accuracy = 0.0
    for round_index in range(max_rounds):
        ctx = run_round(state, epochs, batch_size, lr, participation)
        idle = [np.random.default_rng(0) for _ in ctx.selected]
        processed = apply_solution(ctx.local_models, IDENTITY_PARAMS, idle)
        state.global_model = aggregate(processed)
        state.round += 1
        accuracy = evaluate(state.global_model, state.holdout).accuracy
        if accuracy >= target:
            return round_index + 1, accuracy
    return None, accuracy


def test_fedavg_learns_separable_synthetic(criterion):
    start = time.perf_counter()
    data = gen_synthetic(500, 2, 2, 6.0, seed=7)
    train, hold = split_holdout(data, 0.2, seed=7)
    state = FederatedState(
        global_model=init_mlp((2, 16, 2), np.random.default_rng(70)),
        partitions=partition_dataset(train, 10, "iid", seed=7),
        holdout=hold,
        master_seed=7,
    )
    rounds, accuracy = _identity_fedavg(state, 20, epochs=2, batch_size=32, lr=0.1, participation=1.0, target=0.99)
    elapsed = time.perf_counter() - start

    ok = rounds is not None and elapsed < 30.0
    criterion(7, ok, f"holdout accuracy {accuracy:.3f} after {rounds or 20} rounds ({elapsed:.1f}s)")
    assert rounds is not None, f"accuracy only reached {accuracy:.3f} in 20 rounds"
    assert elapsed < 30.0


DIGIT_GLYPHS = (
    ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
)


def _render_digits(count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic 28x28 digit images: a 7x5 font scaled up, jittered, noised."""
    stamps = [
        np.kron(np.array([[c == "1" for c in row] for row in glyph], dtype=float), np.ones((3, 3)))
        for glyph in DIGIT_GLYPHS
    ]
    labels = np.tile(np.arange(10, dtype=np.uint8), count // 10 + 1)[:count]
    labels = labels[rng.permutation(count)]
    images = np.zeros((count, 28, 28), dtype=np.uint8)
    for i, digit in enumerate(labels):
        canvas = np.zeros((28, 28))
        top = 3 + int(rng.integers(-2, 3))
        left = 6 + int(rng.integers(-2, 3))
        canvas[top : top + 21, left : left + 15] = stamps[digit] * float(rng.uniform(0.6, 1.0))
        canvas = canvas + rng.normal(0.0, 0.05, size=(28, 28))
        images[i] = np.clip(canvas * 255.0, 0, 255).astype(np.uint8)
    return images, labels


def test_fedavg_learns_idx_digits(criterion, tmp_path):
    """A 784-128-10 network learns a 2000-image digit set from IDX files.

    Real MNIST files are used when FEDMOEAC_MNIST_DIR points at a directory
    holding train-images-idx3-ubyte and train-labels-idx1-ubyte; otherwise
    the test writes its own digit corpus in the same format, so the byte-level
    loader is exercised either way.
    """
    start = time.perf_counter()
    images_path = labels_path = None
    source = "FEDMOEAC_MNIST_DIR"
    env_dir = os.environ.get("FEDMOEAC_MNIST_DIR", "")
    if env_dir:
        candidate_images = Path(env_dir) / "train-images-idx3-ubyte"
        candidate_labels = Path(env_dir) / "train-labels-idx1-ubyte"
        if candidate_images.exists() and candidate_labels.exists():
            images_path, labels_path = candidate_images, candidate_labels
    if images_path is None:
        images, labels = _render_digits(2000, np.random.default_rng(808))
        images_path = tmp_path / "train-images-idx3-ubyte"
        labels_path = tmp_path / "train-labels-idx1-ubyte"
        write_idx_images(images_path, images)
        write_idx_labels(labels_path, labels)
        source = "generated IDX corpus"

    data = load_mnist_idx(images_path, labels_path, limit=2000)
    train, hold = split_holdout(data, 0.1, seed=8)
    state = FederatedState(
        global_model=init_mlp((784, 128, 10), np.random.default_rng(80)),
        partitions=partition_dataset(train, 10, "iid", seed=8),
        holdout=hold,
        master_seed=8,
    )
    rounds, accuracy = _identity_fedavg(state, 30, epochs=2, batch_size=64, lr=0.1, participation=0.4, target=0.90)
    elapsed = time.perf_counter() - start

    ok = rounds is not None and elapsed < 300.0
    criterion(8, ok, f"{source}: holdout accuracy {accuracy:.3f} after {rounds or 30} rounds ({elapsed:.1f}s)")
    assert rounds is not None, f"accuracy only reached {accuracy:.3f} in 30 rounds"
    assert elapsed < 300.0


def test_search_comparison_end_to_end(criterion):
    """The clustered search at least matches the plain baseline on shared HV.

    Five seeds, both algorithms on identical budgets, hypervolumes computed
    under bounds shared per pair so the trajectories are comparable. The
    final median must not trail the baseline's, and each algorithm's final
    hypervolume must beat its generation-zero value on at least four seeds.
    """
    start = time.perf_counter()
    finals_a, finals_b = [], []
    trend_a = trend_b = 0
    for seed in range(5):
        run_a = run_search(ExperimentConfig(algorithm="fedmoeac", seed=seed, **COMPARISON_CONFIG))
        run_b = run_search(ExperimentConfig(algorithm="nsga2", seed=seed, **COMPARISON_CONFIG))
        hv_a, hv_b, _ = pair_trajectories(run_a, run_b)
        finals_a.append(hv_a[-1])
        finals_b.append(hv_b[-1])
        trend_a += hv_a[-1] >= hv_a[0]
        trend_b += hv_b[-1] >= hv_b[0]
    elapsed = time.perf_counter() - start

    median_a = float(np.median(finals_a))
    median_b = float(np.median(finals_b))
    ok = median_a >= median_b and trend_a >= 4 and trend_b >= 4 and elapsed < 600.0
    criterion(
        9,
        ok,
        f"median final HV {median_a:.4f} vs {median_b:.4f}; improved over start on {trend_a}/5 and {trend_b}/5 seeds ({elapsed:.0f}s)",
    )
    assert median_a >= median_b
    assert trend_a >= 4
    assert trend_b >= 4
    assert elapsed < 600.0


def _rank(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    ordered = np.asarray(values, dtype=float)[order]
    at = 0
    while at < len(values):
        to = at
        while to + 1 < len(values) and ordered[to + 1] == ordered[at]:
            to += 1
        ranks[order[at : to + 1]] = (at + to) / 2.0 + 1.0
        at = to + 1
    return ranks


def _spearman(a, b) -> float:
    ra, rb = _rank(np.asarray(a)), _rank(np.asarray(b))
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    return float((ra * rb).sum() / np.sqrt((ra**2).sum() * (rb**2).sum()))


def test_objective_tradeoffs_along_gene_sweeps(criterion):
    """More noise buys privacy at the cost of error; more pruning cuts traffic."""
    data = gen_synthetic(400, 2, 3, 8.0, seed=10)
    train, hold = split_holdout(data, 0.1, seed=10)
    parts = partition_dataset(train, 10, "iid", seed=10)
    settings = ObjectiveSettings(participation=0.4, delta=1e-5, budget_ceiling=10.0, clip_z=0.5)

    sigmas = np.geomspace(0.1, 12.0, 8)
    finals = []
    for idx, sigma in enumerate(sigmas):
        state = FederatedState(
            global_model=init_mlp((3, 4, 2), np.random.default_rng(100)),
            partitions=parts,
            holdout=hold,
            master_seed=10,
        )
        candidate = Solution(id=idx, genes=np.array([0.3, 0.0, float(sigma)]))
        last = None
        for _ in range(6):
            ctx = run_round(state, 2, 32, 0.1, settings.participation)
            last = evaluate_objectives(candidate, ctx, state, settings)
            advance_round(state, ctx, candidate, settings)
        finals.append(last)

    budgets = [float(v[2]) for v in finals]
    errors = [float(v[0]) for v in finals]
    budget_ok = all(b2 < b1 for b1, b2 in zip(budgets, budgets[1:]))
    rho = _spearman(sigmas, errors)
    error_ok = rho >= 0.0

    state = FederatedState(
        global_model=init_mlp((3, 4, 2), np.random.default_rng(100)),
        partitions=parts,
        holdout=hold,
        master_seed=11,
    )
    ctx = run_round(state, 2, 32, 0.1, settings.participation)
    overheads = []
    for i, xi in enumerate(np.linspace(0.0, 0.95, 8)):
        probe = Solution(id=50 + i, genes=np.array([float(xi), 0.0, 0.1]))
        overheads.append(float(evaluate_objectives(probe, ctx, state, settings)[1]))
    overhead_ok = all(b <= a + 1e-12 for a, b in zip(overheads, overheads[1:]))

    ok = budget_ok and error_ok and overhead_ok
    criterion(
        10,
        ok,
        f"budget strictly falls along sigma sweep: {budget_ok}; error trend rho {rho:.2f}; overhead non-increasing along prune sweep: {overhead_ok}",
    )
    assert budget_ok
    assert error_ok
    assert overhead_ok


def test_run_outputs_deterministic_across_workers(criterion, tmp_path):
    """Identical seed and config give byte-identical run.json at 1 and 4 workers."""
    small = dict(COMPARISON_CONFIG, population=6, generations=3)
    outputs = []
    for name, workers in (("first", 1), ("again", 1), ("parallel", 4)):
        config = ExperimentConfig(algorithm="fedmoeac", seed=3, workers=workers, **small)
        outdir = write_run_outputs(run_search(config), tmp_path / name)
        outputs.append((outdir / "run.json").read_bytes())

    ok = outputs[0] == outputs[1] == outputs[2]
    criterion(11, ok, f"run.json identical across repeat and 4-worker runs: {ok} ({len(outputs[0])} bytes)")
    assert outputs[0] == outputs[1]
    assert outputs[0] == outputs[2]
