#include <doctest.h>

#include <random>

#include "elasto/coarse.hpp"
#include "elasto/refine.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace elasto;

namespace {

Array2D random_image(std::size_t rows, std::size_t cols, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  Array2D a(rows, cols);
  for (double& v : a.values()) v = g(rng);
  return a;
}

DisplacementField axial_only(Array2D axial) {
  DisplacementField d;
  d.axial = std::move(axial);
  return d;
}

// Independent form of the linearised cost: data term expanded around (a0, l0)
// with first-order Taylor terms from sample_cubic, plus the four smoothness sums.
double quadratic_oracle(const Array2D& f1, const Array2D& f2, const Array2D& a0, const Array2D& l0,
                        const refine::RefineConfig& cfg, const Eigen::VectorXd& u) {
  const std::size_t rows = f1.rows(), cols = f1.cols();
  const auto ua = [&](std::size_t i, std::size_t j) { return u(static_cast<Eigen::Index>(2 * (i * cols + j))); };
  const auto ul = [&](std::size_t i, std::size_t j) { return u(static_cast<Eigen::Index>(2 * (i * cols + j) + 1)); };
  double q = 0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const auto s = refine::sample_cubic(f2, static_cast<double>(i) + a0(i, j), static_cast<double>(j) + l0(i, j));
      if (s.inside) {
        const double r = f1(i, j) - s.value - s.d_row * (ua(i, j) - a0(i, j)) - s.d_col * (ul(i, j) - l0(i, j));
        q += r * r;
      }
      if (i + 1 < rows) {
        q += cfg.alpha1 * std::pow(ua(i + 1, j) - ua(i, j), 2) + cfg.beta1 * std::pow(ul(i + 1, j) - ul(i, j), 2);
      }
      if (j + 1 < cols) {
        q += cfg.alpha2 * std::pow(ua(i, j + 1) - ua(i, j), 2) + cfg.beta2 * std::pow(ul(i, j + 1) - ul(i, j), 2);
      }
    }
  return q;
}

}  // namespace

TEST_SUITE("refine") {
  TEST_CASE("oracle initialisation is not degraded") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto pair = fixture::compression_pair(0.02, 500 + seed);
      const auto r = refine::refine(pair.first, pair.second, pair.oracle);
      const double full = fixture::interior_rms(r.field.axial, pair.oracle.axial, 1.0);
      const double inner = fixture::interior_rms(r.field.axial, pair.oracle.axial);
      MESSAGE("seed " << seed << " RMS full " << full << " interior " << inner << " iters " << r.iterations);
      CHECK(full <= 0.05);
      CHECK(r.field.provenance == Provenance::refined);
    }
  }

  TEST_CASE("very large smoothness weights give a spatially constant field") {
    const auto pair = fixture::compression_pair(0.01, 520);
    refine::RefineConfig cfg;
    cfg.alpha1 = cfg.alpha2 = cfg.beta1 = cfg.beta2 = 1e9;
    const auto r = refine::refine(pair.first, pair.second, axial_only(Array2D(128, 32, 0.3)), cfg);
    const auto [lo, hi] = std::minmax_element(r.field.axial.values().begin(), r.field.axial.values().end());
    const auto lat = r.field.lateral_or_zero();
    const auto [llo, lhi] = std::minmax_element(lat.values().begin(), lat.values().end());
    MESSAGE("axial spread " << *hi - *lo << ", lateral spread " << *lhi - *llo);
    CHECK(*hi - *lo <= 1e-3);
    CHECK(*lhi - *llo <= 1e-3);
  }

  TEST_CASE("refinement improves on the coarse estimate") {
    const auto& basis = fixture::desk_basis();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto pair = fixture::compression_pair(0.02, 540 + seed);
      const auto c = coarse::coarse_estimate(basis, pair.first, pair.second, fixture::desk_dp());
      const auto r = refine::refine(pair.first, pair.second, c.field);
      const double rc = fixture::interior_rms(c.field.axial, pair.oracle.axial, 1.0);
      const double rr = fixture::interior_rms(r.field.axial, pair.oracle.axial, 1.0);
      MESSAGE("seed " << seed << " coarse RMS " << rc << " refined RMS " << rr);
      CHECK(rr < rc);
      for (std::size_t k = 1; k < r.energy_history.size(); ++k)
        CHECK(r.energy_history[k] <= r.energy_history[k - 1]);
      CHECK(r.energy_history.size() >= 1);
    }
  }

  TEST_CASE("refine validates its inputs") {
    const auto pair = fixture::compression_pair(0.01, 1);
    refine::RefineConfig cfg;
    cfg.alpha1 = -1;
    CHECK_THROWS_AS(refine::refine(pair.first, pair.second, pair.oracle, cfg), InvalidArgument);
    cfg = {};
    cfg.max_iters = 0;
    CHECK_THROWS_AS(refine::refine(pair.first, pair.second, pair.oracle, cfg), InvalidArgument);
    CHECK_THROWS_AS(refine::refine(pair.first, pair.second, axial_only(Array2D(10, 10))), DimensionError);
    auto bad = pair.oracle;
    bad.axial(3, 3) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(refine::refine(pair.first, pair.second, bad), InvalidArgument);
  }

  TEST_CASE("linearised system matches an independent quadratic and its gradient") {
    const auto f1 = random_image(16, 16, 60);
    const auto f2 = random_image(16, 16, 61);
    const auto a0 = random_image(16, 16, 62, 0.7);
    const auto l0 = random_image(16, 16, 63, 0.4);
    refine::RefineConfig cfg;
    cfg.alpha1 = 5;
    cfg.alpha2 = 1;
    cfg.beta1 = 3;
    cfg.beta2 = 0.5;
    const auto sys = refine::linearize(f1, f2, a0, l0, cfg);
    std::mt19937_64 rng(64);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::VectorXd u(512);
      for (Eigen::Index k = 0; k < 512; ++k) u(k) = g(rng);
      const double q = quadratic_oracle(f1, f2, a0, l0, cfg, u);
      CHECK(sys.cost(u) == doctest::Approx(q).epsilon(1e-10));
      const Eigen::VectorXd grad = 2.0 * (sys.hessian * u - sys.rhs);
      for (int probe = 0; probe < 40; ++probe) {
        const auto k = static_cast<Eigen::Index>(rng() % 512);
        const double h = 1e-4;
        Eigen::VectorXd up = u, dn = u;
        up(k) += h;
        dn(k) -= h;
        const double fd = (quadratic_oracle(f1, f2, a0, l0, cfg, up) - quadratic_oracle(f1, f2, a0, l0, cfg, dn)) / (2 * h);
        CHECK(std::abs(fd - grad(k)) <= 1e-5 * std::max(1.0, std::abs(grad(k))));
      }
    }
    // At the solution the gradient vanishes.
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(sys.hessian);
    const Eigen::VectorXd u = solver.solve(sys.rhs);
    CHECK((sys.hessian * u - sys.rhs).norm() <= 1e-8 * sys.rhs.norm());
  }

  TEST_CASE("energy equals the data term plus smoothness sums") {
    const auto f1 = random_image(12, 10, 70);
    const auto zero = Array2D(12, 10);
    refine::RefineConfig cfg;
    double ss = 0;
    for (double v : f1.values()) ss += v * v;
    CHECK(refine::energy(f1, Array2D(12, 10), zero, zero, cfg) == doctest::Approx(ss).epsilon(1e-14));
    CHECK(refine::energy(f1, f1, zero, zero, cfg) == 0.0);
    Array2D ramp(12, 10);
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 10; ++j) ramp(i, j) = 0.1 * static_cast<double>(i) + 0.2 * static_cast<double>(j);
    // Flat images isolate the smoothness term: 11*10 axial and 12*9 lateral differences.
    const Array2D flat(12, 10, 1.0);
    const double expected = 5 * 0.01 * 110 + 1 * 0.04 * 108 + 5 * 0.01 * 110 + 1 * 0.04 * 108;
    CHECK(refine::energy(flat, flat, ramp, ramp, cfg) == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("strain is the least-squares slope") {
    Array2D lin(60, 3), cst(60, 3, 4.2), quad(60, 3);
    for (std::size_t i = 0; i < 60; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        lin(i, j) = 0.02 * static_cast<double>(i);
        quad(i, j) = static_cast<double>(i * i) / 1000.0;
      }
    const auto sl = refine::strain(axial_only(lin), 9);
    const auto sc = refine::strain(axial_only(cst), 9);
    for (double v : sl.strain.values()) CHECK(v == doctest::Approx(0.02).epsilon(1e-12));
    for (double v : sc.strain.values()) CHECK(std::abs(v) <= 1e-12);
    const auto sq = refine::strain(quad, 5);
    CHECK(sq.window_len == 5);
    for (std::size_t i = 2; i < 58; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(sq.strain(i, j) - 2.0 * static_cast<double>(i) / 1000.0) <= 1e-9);
    // Truncated windows at the borders, checked against an independent fit.
    for (std::size_t i : {0, 1, 58, 59}) {
      std::vector<double> x, y;
      for (long t = static_cast<long>(i) - 2; t <= static_cast<long>(i) + 2; ++t)
        if (t >= 0 && t < 60) {
          x.push_back(static_cast<double>(t));
          y.push_back(quad(static_cast<std::size_t>(t), 0));
        }
      CHECK(sq.strain(i, 0) == doctest::Approx(oracle::ls_slope(x, y)).epsilon(1e-12));
    }
  }

  TEST_CASE("strain is linear in d") {
    const auto d1 = random_image(40, 5, 80);
    const auto d2 = random_image(40, 5, 81);
    Array2D mix(40, 5);
    for (std::size_t k = 0; k < mix.size(); ++k) mix.values()[k] = 1.7 * d1.values()[k] - 0.4 * d2.values()[k];
    const auto s1 = refine::strain(d1, 7), s2 = refine::strain(d2, 7), sm = refine::strain(mix, 7);
    for (std::size_t k = 0; k < mix.size(); ++k)
      CHECK(std::abs(sm.strain.values()[k] - (1.7 * s1.strain.values()[k] - 0.4 * s2.strain.values()[k])) <= 1e-12);
  }

  TEST_CASE("strain window validation") {
    const Array2D d(20, 2);
    CHECK_THROWS_AS(refine::strain(d, 4), InvalidArgument);
    CHECK_THROWS_AS(refine::strain(d, 1), InvalidArgument);
    CHECK_THROWS_AS(refine::strain(d, 21), InvalidArgument);
    CHECK_NOTHROW(refine::strain(d, 19));
  }

  TEST_CASE("SNR and CNR formulas") {
    Array2D s(10, 20);
    const double h = std::sqrt(0.5);
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 20; ++j) {
        const double sign = (i + j) % 2 ? 1.0 : -1.0;
        s(i, j) = j < 10 ? 1.0 + sign * h : 2.0 + sign * h;
      }
    const Window target{0, 0, 10, 10}, background{0, 10, 10, 10};
    const auto q = refine::snr_cnr(s, target, background);
    CHECK(q.cnr == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(q.snr == doctest::Approx(2.0 / h).epsilon(1e-12));

    Array2D u(4, 4);
    for (std::size_t k = 0; k < 16; ++k) u.values()[k] = 3.0 + (k % 2 ? 0.1 : -0.1);
    CHECK(refine::snr_cnr(u, {0, 0, 2, 2}, {0, 0, 4, 4}).snr == doctest::Approx(30.0).epsilon(1e-12));

    const Array2D flat(4, 4, 2.0);
    const auto sat = refine::snr_cnr(flat, {0, 0, 2, 2}, {2, 2, 2, 2});
    CHECK(sat.snr_saturated);
    CHECK(sat.cnr_saturated);
    CHECK(std::isinf(sat.snr));
    CHECK(sat.cnr == 0.0);
    CHECK_THROWS_AS(refine::snr_cnr(flat, {3, 3, 2, 2}, {0, 0, 2, 2}), InvalidArgument);
  }

  TEST_CASE("SNR/CNR on a noisy 2:1 inclusion matches a straight-line recomputation") {
    auto s = random_image(64, 32, 90, 0.05);
    for (std::size_t i = 0; i < 64; ++i)
      for (std::size_t j = 0; j < 32; ++j) s(i, j) += (i >= 24 && i < 40 && j >= 10 && j < 22) ? 0.01 : 0.02;
    const Window target{26, 12, 12, 8}, background{2, 2, 16, 28};
    const auto q = refine::snr_cnr(StrainImage{s, 5}, target, background);
    const auto stats = [&](const Window& w) {
      std::vector<double> v;
      for (std::size_t i = w.row; i < w.row + w.rows; ++i)
        for (std::size_t j = w.col; j < w.col + w.cols; ++j) v.push_back(s(i, j));
      double mean = 0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0;
      for (double x : v) var += (x - mean) * (x - mean);
      return std::pair{mean, var / static_cast<double>(v.size())};
    };
    const auto [mt, vt] = stats(target);
    const auto [mb, vb] = stats(background);
    CHECK(std::abs(q.snr - mb / std::sqrt(vb)) <= 1e-12 * std::abs(q.snr));
    CHECK(std::abs(q.cnr - std::sqrt(2 * (mb - mt) * (mb - mt) / (vb + vt))) <= 1e-12 * q.cnr);
  }

  TEST_CASE("NCC") {
    const auto a = random_image(128, 32, 100);
    CHECK(refine::ncc(a, a) == doctest::Approx(1.0).epsilon(1e-14));
    Array2D neg(128, 32);
    for (std::size_t k = 0; k < a.size(); ++k) neg.values()[k] = -a.values()[k];
    CHECK(refine::ncc(a, neg) == doctest::Approx(-1.0).epsilon(1e-14));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto noise = random_image(128, 32, 200 + seed, 10.0);
      Array2D b(128, 32);
      for (std::size_t k = 0; k < a.size(); ++k) b.values()[k] = a.values()[k] + noise.values()[k];
      CHECK(std::abs(refine::ncc(a, b)) < 0.2);
      Array2D scaled(128, 32);
      for (std::size_t k = 0; k < a.size(); ++k) scaled.values()[k] = 3.5 * a.values()[k] - 7.0;
      CHECK(std::abs(refine::ncc(scaled, b) - refine::ncc(a, b)) <= 1e-12);
      CHECK(std::abs(refine::ncc(a, scaled) - 1.0) <= 1e-12);
    }
    CHECK_THROWS_AS(refine::ncc(a, Array2D(128, 32, 1.0)), DegenerateInput);
    CHECK_THROWS_AS(refine::ncc(a, a, std::vector<std::uint8_t>(a.size(), 0)), DegenerateInput);
    CHECK_THROWS_AS(refine::ncc(a, Array2D(4, 4)), DimensionError);
  }

  TEST_CASE("warp") {
    const auto img = random_image(30, 8, 110);
    const auto same = refine::warp(img, axial_only(Array2D(30, 8)));
    CHECK(std::equal(img.values().begin(), img.values().end(), same.image.values().begin()));
    CHECK(same.overlap() == img.size());
    const auto moved = refine::warp(img, axial_only(Array2D(30, 8, 1.0)));
    for (std::size_t i = 0; i + 1 < 30; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(moved.image(i, j) == img(i + 1, j));
        CHECK(moved.mask[i * 8 + j] == 1);
      }
    for (std::size_t j = 0; j < 8; ++j) CHECK(moved.mask[29 * 8 + j] == 0);
    CHECK(moved.overlap() == 29 * 8);

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto pair = fixture::compression_pair(0.02, 600 + seed);
      const double v = refine::ncc(pair.first.samples, refine::warp(pair.second.samples, pair.oracle));
      CHECK(v > 0.95);
    }
  }

  TEST_CASE("sample_cubic is exact at integer positions") {
    const auto img = random_image(10, 10, 120);
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 10; ++j) {
        const auto s = refine::sample_cubic(img, static_cast<double>(i), static_cast<double>(j));
        CHECK(s.value == img(i, j));
        CHECK(s.inside);
      }
    CHECK_FALSE(refine::sample_cubic(img, -0.5, 3).inside);
    CHECK_FALSE(refine::sample_cubic(img, 2, 9.5).inside);
  }
}
