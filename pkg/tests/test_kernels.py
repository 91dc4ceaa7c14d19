import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from railyard import kernels


IMPLS = kernels.implementations()


def dense_expand(radices, subs, local):
    """``local`` on ``subs`` tensored with identity, placed by axis permutation."""
    rest = [i for i in range(len(radices)) if i not in subs]
    d_rest = int(np.prod([radices[i] for i in rest])) if rest else 1
    big = np.kron(local, np.eye(d_rest)).reshape([radices[i] for i in subs + rest] * 2)
    order = subs + rest
    k = len(radices)
    inv = [order.index(i) for i in range(k)]
    big = big.transpose(inv + [k + j for j in inv])
    D = int(np.prod(radices))
    return big.reshape(D, D)


def coo_dense(r, c, v, D):
    return sp.coo_matrix((v, (r, c)), shape=(D, D)).toarray()


@st.composite
def local_problem(draw):
    k = draw(st.integers(1, 5))
    radices = draw(st.lists(st.sampled_from([2, 3]), min_size=k, max_size=k))
    m = draw(st.integers(1, min(3, k)))
    subs = draw(st.permutations(list(range(k))))[:m]
    d = int(np.prod([radices[s] for s in subs]))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    local = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) * (rng.random((d, d)) < 0.6)
    return radices, list(subs), local


@pytest.mark.parametrize("name", sorted(IMPLS))
@given(local_problem())
def test_expand_local_matches_dense(name, prob):
    radices, subs, local = prob
    r, c, v = IMPLS[name].expand_local(radices, subs, local)
    D = int(np.prod(radices))
    np.testing.assert_array_equal(coo_dense(r, c, v, D), dense_expand(radices, subs, local))


@given(local_problem())
def test_backends_agree_on_expand(prob):
    outs = [coo_dense(*impl.expand_local(*prob), int(np.prod(prob[0]))) for impl in IMPLS.values()]
    for o in outs[1:]:
        np.testing.assert_array_equal(o, outs[0])


def random_csr(rng, n, density=0.05):
    A = sp.random(n, n, density=density, random_state=np.random.default_rng(rng.integers(2**32)),
                  format="csr", dtype=float)
    return (A + 1j * A.T).tocsr()


@pytest.mark.parametrize("name", sorted(IMPLS))
def test_matvec_matches_scipy(name, rng):
    A = random_csr(rng, 500)
    x = rng.normal(size=500) + 1j * rng.normal(size=500)
    k = kernels.CSRKernel(A)
    np.testing.assert_allclose(k.matvec(x, threads=1, impl=IMPLS[name]), A @ x, rtol=0, atol=1e-12)


@pytest.mark.parametrize("name", sorted(IMPLS))
def test_matvec_bitwise_across_threads(name, rng):
    A = random_csr(rng, 3001, 0.01)
    x = rng.normal(size=3001) + 1j * rng.normal(size=3001)
    k = kernels.CSRKernel(A)
    ref = k.matvec(x, threads=1, impl=IMPLS[name])
    for t in (2, 3, 7, 16):
        assert np.array_equal(k.matvec(x, threads=t, impl=IMPLS[name]), ref)


def test_matvec_backends_close(rng):
    A = random_csr(rng, 800)
    x = rng.normal(size=800) + 1j * rng.normal(size=800)
    k = kernels.CSRKernel(A)
    outs = [k.matvec(x, impl=m) for m in IMPLS.values()]
    for o in outs[1:]:
        np.testing.assert_allclose(o, outs[0], rtol=0, atol=1e-12)


def test_empty_rows():
    A = sp.csr_matrix(([1.0], ([2], [0])), shape=(4, 4))
    for impl in IMPLS.values():
        out = kernels.CSRKernel(A).matvec(np.ones(4), impl=impl)
        np.testing.assert_array_equal(out, [0, 0, 1, 0])


def test_backend_reported():
    assert kernels.BACKEND in IMPLS
    assert "python" in IMPLS


def test_default_threads_env(monkeypatch):
    monkeypatch.setenv("RAILYARD_THREADS", "4")
    assert kernels.default_threads() == 4
    monkeypatch.setenv("RAILYARD_THREADS", "junk")
    assert kernels.default_threads() == 1


def test_pure_python_switch():
    import subprocess
    import sys
    code = "from railyard import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={"RAILYARD_PURE_PYTHON": "1", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_fallback_builds_same_operator():
    import subprocess
    import sys
    code = (
        "import hashlib, numpy as np\n"
        "from railyard.circuit import QuantumCircuit, single, cnot\n"
        "from railyard.layout import build_layout_3local, close_cycle\n"
        "from railyard.hamiltonian import build_h3s, assemble\n"
        "c = QuantumCircuit(2, (single('H', 0), cnot(0, 1)))\n"
        "lay = close_cycle(build_layout_3local(c))\n"
        "r, k, v = assemble(build_h3s(c, lay, 'full_clock')).entries()\n"
        "print(hashlib.sha256(r.tobytes() + k.tobytes() + v.tobytes()).hexdigest())\n"
    )
    digests = set()
    for env in ({"RAILYARD_PURE_PYTHON": "1"}, {}):
        out = subprocess.run([sys.executable, "-c", code], env={**env, "PATH": ""},
                             capture_output=True, text=True, check=True)
        digests.add(out.stdout.strip())
    assert len(digests) == 1


def test_expand_local_shape_checked():
    with pytest.raises(ValueError):
        kernels.expand_local([2, 3], [0, 1], np.eye(4))
