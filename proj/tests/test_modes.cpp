#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "icc/constants.hpp"
#include "icc/equilibrium.hpp"
#include "icc/error.hpp"
#include "icc/interactions.hpp"
#include "icc/modes.hpp"
#include "oracles.hpp"

using namespace icc;

namespace {

const IonSpecies kCa = species_from_catalog("Ca40");

TrapConfig linear(double radial_hz, double axial_hz, double asym = 0.0) {
  return {linear_trap_from_frequencies(kCa, to_angular(radial_hz), to_angular(axial_hz), to_angular(100e6), 0.5e-3,
                                       asym),
          RfMode::pseudopotential};
}

SystemState string_state(int n, double axial_hz) {
  std::vector<Vec3> p;
  for (double z : string_positions(n, kCa, to_angular(axial_hz))) p.push_back({0, 0, z});
  return make_state(p);
}

// Total force on every ion from trap and Coulomb terms, written out here.
std::vector<Vec3> total_force(const std::vector<Vec3>& r, const TrapConfig& t) {
  const std::vector<double> q(r.size(), kCa.charge);
  auto f = coulomb_forces(r, q);
  const auto k = static_stiffness(t, kCa);
  for (std::size_t i = 0; i < r.size(); ++i) f[i] += Vec3{-k.x * r[i].x, -k.y * r[i].y, -k.z * r[i].z};
  return f;
}

}  // namespace

TEST_SUITE("modes") {
  TEST_CASE("single ion hessian is diagonal") {
    const auto t = linear(2e6, 500e3, 0.02);
    const auto h = hessian(make_state({{0, 0, 0}}), {kCa}, t);
    const auto w = rf_secular_frequencies(t.linear(), kCa);
    CHECK(h(0, 0) == doctest::Approx(w.x * w.x).epsilon(1e-12));
    CHECK(h(1, 1) == doctest::Approx(w.y * w.y).epsilon(1e-12));
    CHECK(h(2, 2) == doctest::Approx(std::pow(to_angular(500e3), 2)).epsilon(1e-12));
    CHECK(h(0, 1) == 0.0);
    CHECK(h(1, 2) == 0.0);
  }

  TEST_CASE("hessian of a 3D crystal matches finite differences") {
    const auto t = linear(600e3, 500e3);
    const auto eq = relax(cloud_start({0, 0, 0, 0, 0}, {kCa}, t, 8), {kCa}, t);
    REQUIRE(eq.converged);
    const auto h = hessian(eq.state(), {kCa}, t);
    double scale = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) scale = std::max(scale, std::abs(h(i, i)));
    const double step = 1e-11;
    for (std::size_t i = 0; i < 5; ++i)
      for (int a = 0; a < 3; ++a) {
        auto rp = eq.positions, rm = eq.positions;
        rp[i][a] += step;
        rm[i][a] -= step;
        const auto fp = total_force(rp, t), fm = total_force(rm, t);
        for (std::size_t j = 0; j < 5; ++j)
          for (int b = 0; b < 3; ++b) {
            const double fd = -(fp[j][b] - fm[j][b]) / (2 * step) / kCa.mass;
            CHECK(std::abs(h(3 * j + b, 3 * i + a) - fd) <= 1e-5 * scale);
          }
      }
  }

  TEST_CASE("hessian refuses a non-equilibrium") {
    const auto t = linear(2e6, 500e3);
    CHECK_THROWS_AS(hessian(make_state({{0, 0, -3e-6}, {0, 0, 3e-6}}), {kCa}, t), PhysicsError);
  }

  TEST_CASE("axial modes of two and three ions") {
    const auto t = linear(3e6, 500e3);
    const double wz = to_angular(500e3);
    const auto s2 = mode_spectrum(hessian(string_state(2, 500e3), {kCa}, t));
    const auto a2 = s2.frequencies_with(ModeLabel::axial);
    REQUIRE(a2.size() == 2);
    CHECK(a2[0] == doctest::Approx(wz).epsilon(1e-9));
    CHECK(a2[1] == doctest::Approx(std::sqrt(3.0) * wz).epsilon(1e-9));

    // 3x3 axial block by differencing the 1D force, roots of its
    // characteristic polynomial by bisection.
    const auto s = string_state(3, 500e3);
    double k[3][3];
    for (int i = 0; i < 3; ++i) {
      auto rp = s.positions, rm = s.positions;
      const double step = 1e-11;
      rp[i].z += step;
      rm[i].z -= step;
      const auto fp = total_force(rp, t), fm = total_force(rm, t);
      for (int j = 0; j < 3; ++j) k[j][i] = -(fp[j].z - fm[j].z) / (2 * step) / (kCa.mass * wz * wz);
    }
    auto det = [&](double x) {
      const double a = k[0][0] - x, b = k[1][1] - x, c = k[2][2] - x;
      return a * (b * c - k[1][2] * k[2][1]) - k[0][1] * (k[1][0] * c - k[1][2] * k[2][0]) +
             k[0][2] * (k[1][0] * k[2][1] - b * k[2][0]);
    };
    const double lam3 = oracle::bisect(det, 4.0, 7.0, 1e-12);
    CHECK(lam3 == doctest::Approx(29.0 / 5.0).epsilon(1e-6));
    const auto a3 = mode_spectrum(hessian(s, {kCa}, t)).frequencies_with(ModeLabel::axial);
    REQUIRE(a3.size() == 3);
    CHECK(a3[0] == doctest::Approx(wz).epsilon(1e-6));
    CHECK(a3[1] == doctest::Approx(std::sqrt(3.0) * wz).epsilon(1e-6));
    CHECK(a3[2] == doctest::Approx(std::sqrt(lam3) * wz).epsilon(1e-6));
  }

  TEST_CASE("centre-of-mass mode does not depend on N") {
    const auto t = linear(4e6, 300e3);
    const auto a = mode_spectrum(hessian(string_state(5, 300e3), {kCa}, t)).frequencies_with(ModeLabel::axial);
    CHECK(a.front() == doctest::Approx(to_angular(300e3)).epsilon(1e-9));
  }

  TEST_CASE("trace equals eigenvalue sum and blocks decouple") {
    const auto t = linear(3e6, 400e3, 0.01);
    const auto h = hessian(string_state(7, 400e3), {kCa}, t);
    const auto s = mode_spectrum(h);
    double sum = 0.0;
    for (double v : s.squared_frequencies) sum += v;
    CHECK(sum == doctest::Approx(h.trace()).epsilon(1e-9));
    double diag = 0.0, cross = 0.0;
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 7; ++j) {
        diag = std::max(diag, std::abs(h(3 * i + 2, 3 * i + 2)));
        cross = std::max({cross, std::abs(h(3 * i + 2, 3 * j)), std::abs(h(3 * i + 2, 3 * j + 1))});
      }
    CHECK(cross <= 1e-12 * diag);
  }

  TEST_CASE("asymmetric input is rejected") {
    Matrix m(3);
    m(0, 0) = m(1, 1) = m(2, 2) = 1.0;
    m(0, 1) = 0.5;
    CHECK_THROWS_AS(mode_spectrum(m), PhysicsError);
    m(0, 0) = -4.0;
    m(0, 1) = 0.0;
    const auto s = mode_spectrum(m);
    CHECK(s.has_imaginary());
    CHECK(s.imaginary[0]);
    CHECK(s.frequencies[0] == doctest::Approx(2.0));
  }

  TEST_CASE("transverse spectrum of a string") {
    for (int n : {2, 5, 9}) {
      const auto t = linear(2.5e6, 400e3);
      const auto s = transverse_spectrum(string_state(n, 400e3), {kCa}, t.linear());
      CHECK(s.frequencies.back() == doctest::Approx(to_angular(2.5e6)).epsilon(1e-9));
      // Lowest mode: neighbours move in opposite directions.
      const auto& v = s.eigenvectors.front();
      for (int i = 0; i + 1 < n; ++i) {
        const double a = v[3 * i] + v[3 * i + 1], b = v[3 * (i + 1)] + v[3 * (i + 1) + 1];
        CHECK(a * b < 0.0);
      }
    }
  }

  TEST_CASE("zigzag mode softens to zero at 12/5") {
    const double wz = to_angular(400e3);
    const auto t = linear_trap_from_frequencies(kCa, std::sqrt(2.4) * wz, wz, to_angular(100e6), 0.5e-3);
    const auto s = transverse_spectrum(string_state(3, 400e3), {kCa}, t, 1e-22);
    CHECK(s.frequencies.front() < 1e-4 * wz);
  }

  TEST_CASE("soft mode scan") {
    const double wz = to_angular(400e3);
    const auto tmpl = linear_trap_from_frequencies(kCa, 3 * wz, wz, to_angular(100e6), 0.5e-3);
    const std::vector<double> grid{3.5, 3.0, 2.7, 2.5, 2.42, 2.4, 2.3};
    const auto pts = soft_mode_scan(3, kCa, tmpl, grid);
    REQUIRE(pts.size() == grid.size());
    for (std::size_t k = 1; k + 2 < pts.size(); ++k) CHECK(pts[k].lowest_frequency < pts[k - 1].lowest_frequency);
    for (std::size_t k = 0; k + 2 < pts.size(); ++k) {
      CHECK(pts[k].linear);
      CHECK(pts[k].lowest_frequency < std::sqrt(grid[k]) * wz);
    }
    CHECK(pts[5].lowest_frequency < 1e-3 * wz);
    CHECK_FALSE(pts.back().linear);

    // w^2 near the critical point is linear in the ratio.
    const std::vector<double> near{2.44, 2.43, 2.42, 2.41};
    const auto np = soft_mode_scan(3, kCa, tmpl, near);
    std::vector<double> w2;
    for (const auto& p : np) w2.push_back(p.lowest_frequency * p.lowest_frequency);
    CHECK(oracle::fit_line(near, w2).r_squared > 0.9999);
  }

  TEST_CASE("penning rotating frame spectrum") {
    const auto be = species_from_catalog("Be9");
    PenningTrap p;
    p.r0 = p.z0 = 1e-3;
    p.magnetic_field = 4.5;
    const double wc = be.charge * 4.5 / be.mass;
    p.u0 = penning_u0_for(p, be, 0.2 * wc);
    p.rotation_angular_frequency = 0.3 * wc;
    const TrapConfig tc{p, RfMode::pseudopotential};
    const double beta2 = penning_rotating_frame_radial_stiffness(p, be);
    const auto h = hessian(make_state({{0, 0, 0}}), {be}, tc);
    CHECK(h(0, 0) == doctest::Approx(beta2).epsilon(1e-12));
    CHECK(h(1, 1) == doctest::Approx(beta2).epsilon(1e-12));
    CHECK(h(2, 2) == doctest::Approx(0.04 * wc * wc).epsilon(1e-12));

    const auto plain = rotating_frame_spectrum(make_state({{0, 0, 0}}), {be}, p, false);
    const auto ref = mode_spectrum(h);
    for (std::size_t k = 0; k < 3; ++k) CHECK(plain.frequencies[k] == doctest::Approx(ref.frequencies[k]).epsilon(1e-9));

    // With the gyro term a single ion has frequencies G/2 +- sqrt(G^2/4 + beta^2).
    const double g = rotating_frame_gyro_rate(p, be);
    const auto gyro = rotating_frame_spectrum(make_state({{0, 0, 0}}), {be}, p, true);
    const double hi = std::sqrt(g * g / 4 + beta2) + std::abs(g) / 2;
    const double lo = std::sqrt(g * g / 4 + beta2) - std::abs(g) / 2;
    auto present = [&](double w) {
      return std::any_of(gyro.frequencies.begin(), gyro.frequencies.end(),
                         [&](double f) { return std::abs(f / w - 1) < 1e-9; });
    };
    CHECK(gyro.size() == 3);
    CHECK(present(lo));
    CHECK(present(hi));
    CHECK(present(0.2 * wc));
  }
}
