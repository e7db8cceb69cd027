"""Property-based checks of the elementary building blocks."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from overdet_lab.disk import polygon_disk_area
from overdet_lab.geometry import build_ellipse_domain, build_fourier_domain, triangulate
from overdet_lab.functionals import isoperimetric_deficit
from overdet_lab.poincare import QuadratureMeasure, mean_swap_check, r_mean

finite = st.floats(-100, 100, allow_nan=False)
positive = st.floats(0.1, 10.0)


@st.composite
def weighted_samples(draw):
    n = draw(st.integers(1, 12))
    v = draw(st.lists(finite, min_size=n, max_size=n))
    w = draw(st.lists(positive, min_size=n, max_size=n))
    return np.array(v), np.array(w)


@given(weighted_samples(), st.sampled_from([1.0, 1.5, 2.0, 3.0, 4.0]), st.floats(-1.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_r_mean_minimises(sample, r, shift):
    v, w = sample
    lam = r_mean(v, w, r)
    assert v.min() <= lam <= v.max()
    obj = lambda x: np.sum(w * np.abs(v - x) ** r)
    other = lam + shift * (1.0 + np.ptp(v))
    assert obj(lam) <= obj(other) * (1 + 1e-9) + 1e-9


@given(st.floats(-1.5, 2.5), st.floats(-1.5, 2.5), st.floats(0.01, 3.0))
@settings(max_examples=200, deadline=None)
def test_disk_clip_area_bounds(cx, cy, r):
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    a = polygon_disk_area(square, (cx, cy), r)
    assert -1e-12 <= a <= min(1.0, math.pi * r * r) + 1e-12


@given(st.floats(0.2, 3.0), st.floats(0.0, 2 * math.pi), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=15, deadline=None)
def test_deficit_similarity_invariant(scale, angle, tx, ty):
    dom = build_fourier_domain(1.0, cosine_coeffs=[0.0, 0.0, 0.08], n_boundary=96)
    base = isoperimetric_deficit(triangulate(dom, 0.3))
    moved = dom.scaled(scale).rotated(angle).translated((tx, ty))
    assert isoperimetric_deficit(triangulate(moved, 0.3 * scale)) == pytest.approx(base, rel=1e-9, abs=1e-12)


@given(st.lists(st.floats(0.0, 50.0), min_size=1, max_size=8), st.floats(1.0, 6.0))
@settings(max_examples=200, deadline=None)
def test_power_sum(x, q):
    x = np.array(x)
    assert np.sum(x ** q) <= np.sum(x) ** q * (1 + 1e-12) + 1e-300


@pytest.fixture(scope="module")
def measure():
    return QuadratureMeasure(triangulate(build_ellipse_domain(1.2, 0.8, 64), 0.15))


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1.0, 1.5, 2.0, 3.0]), st.floats(-3, 3))
@settings(max_examples=60, deadline=None)
def test_mean_swap_inequality(measure, seed, p, lam):
    rng = np.random.default_rng(seed)
    mesh = measure.mesh
    v = np.sin(rng.normal(size=2) @ mesh.vertices.T * 3) + rng.normal(scale=0.2, size=mesh.n_vertices)
    F = rng.random(len(mesh.triangles)) < rng.uniform(0.05, 1.0)
    F[0] = True
    lhs, rhs = mean_swap_check(measure, measure.values(v), F, lam, p)
    assert lhs <= rhs * (1 + 1e-12)
