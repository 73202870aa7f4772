#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "icc/constants.hpp"
#include "icc/error.hpp"
#include "icc/interactions.hpp"
#include "icc/species.hpp"
#include "icc/trap.hpp"
#include "oracles.hpp"

using namespace icc;

namespace {

std::vector<Vec3> random_cloud(std::size_t n, std::uint64_t seed, double size = 20e-6) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-size, size);
  std::vector<Vec3> r(n);
  for (auto& p : r) p = {u(g), u(g), u(g)};
  return r;
}

}  // namespace

TEST_SUITE("interactions") {
  TEST_CASE("single pair force") {
    const std::vector<Vec3> r{{0, 0, 0}, {0, 0, 10e-6}};
    const std::vector<double> q{oracle::e, oracle::e};
    const auto f = coulomb_forces(r, q);
    const double hand = oracle::ke * oracle::e * oracle::e / (10e-6 * 10e-6);
    CHECK(hand == doctest::Approx(2.31e-18).epsilon(0.002));
    CHECK(f[1].z == doctest::Approx(hand).epsilon(1e-14));
    CHECK(f[0].z == doctest::Approx(-hand).epsilon(1e-14));
    CHECK(f[0].x == 0.0);
    CHECK(coulomb_energy(r, q) == doctest::Approx(hand * 10e-6).epsilon(1e-14));
  }

  TEST_CASE("one ion feels nothing") {
    const std::vector<Vec3> r{{1e-6, 2e-6, 3e-6}};
    const std::vector<double> q{oracle::e};
    CHECK(norm(coulomb_forces(r, q)[0]) == 0.0);
    CHECK(coulomb_energy(r, q) == 0.0);
  }

  TEST_CASE("coincident ions are an error") {
    const std::vector<Vec3> r{{0, 0, 0}, {0, 0, 1e-12}};
    const std::vector<double> q{oracle::e, oracle::e};
    CHECK_THROWS_AS(coulomb_forces(r, q), PhysicsError);
    CHECK_THROWS_AS(coulomb_energy(r, q), PhysicsError);
  }

  TEST_CASE("serial and parallel kernels agree") {
    for (std::size_t n : {2u, 17u, 150u}) {
      const auto r = random_cloud(n, n);
      std::vector<double> q(n, oracle::e);
      q[0] = 2 * oracle::e;
      std::vector<Vec3> a(n), b(n);
      coulomb_forces_serial(r, q, a);
      coulomb_forces_parallel(r, q, b);
      double scale = 0.0;
      for (const auto& f : a) scale = std::max(scale, norm(f));
      for (std::size_t i = 0; i < n; ++i) CHECK(norm(a[i] - b[i]) <= 1e-12 * scale);
    }
  }

  TEST_CASE("forces sum to zero and are minus the energy gradient") {
    const auto r = random_cloud(12, 9);
    const std::vector<double> q(12, oracle::e);
    const auto f = coulomb_forces(r, q);
    Vec3 total{};
    double scale = 0.0;
    for (const auto& v : f) {
      total += v;
      scale = std::max(scale, norm(v));
    }
    CHECK(norm(total) < 1e-12 * scale);
    for (int i : {0, 5, 11}) {
      for (int a = 0; a < 3; ++a) {
        auto energy = [&](double s) {
          auto p = r;
          p[i][a] = s;
          return coulomb_energy(p, q);
        };
        CHECK(-oracle::derivative(energy, r[i][a], 1e-10) == doctest::Approx(f[i][a]).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("energy breakdown") {
    const auto ca = species_from_catalog("Ca40");
    TrapConfig tc{linear_trap_from_frequencies(ca, to_angular(2e6), to_angular(500e3), to_angular(50e6), 0.5e-3),
                  RfMode::pseudopotential};
    SystemState one = make_state({{0, 0, 0}});
    CHECK(total_potential_energy(one, {ca}, tc).total == 0.0);

    const double d = oracle::two_ion_spacing(ca.mass, ca.charge, to_angular(500e3));
    auto along_z = [&](double z) {
      return total_potential_energy(make_state({{0, 0, -z}, {0, 0, z}}), {ca}, tc).total;
    };
    const double g = oracle::derivative(along_z, d / 2, 1e-12);
    const double gscale = ca.mass * std::pow(to_angular(500e3), 2) * d;
    CHECK(std::abs(g) < 1e-7 * gscale);

    auto s = make_state(random_cloud(6, 4));
    const auto e = total_potential_energy(s, {ca}, tc);
    CHECK(e.coulomb_energy > 0.0);
    CHECK(e.total == doctest::Approx(e.trap_energy + e.coulomb_energy).epsilon(1e-12));

    TrapConfig fd = tc;
    fd.rf_mode = RfMode::full_drive;
    CHECK_THROWS_AS(total_potential_energy(s, {ca}, fd), PhysicsError);
  }

  TEST_CASE("analytic hessian matches differentiated forces") {
    const auto ca = species_from_catalog("Ca40");
    TrapConfig tc{linear_trap_from_frequencies(ca, to_angular(2e6), to_angular(500e3), to_angular(50e6), 0.5e-3),
                  RfMode::pseudopotential};
    const auto r = random_cloud(4, 21);
    const auto h = potential_hessian(make_state(r), {ca}, tc);
    const std::vector<double> q(4, ca.charge);
    const auto st = static_stiffness(tc, ca);
    const double k[3] = {st.x, st.y, st.z};
    CHECK(h.asymmetry() < 1e-12);
    for (std::size_t i = 0; i < 4; ++i)
      for (int a = 0; a < 3; ++a) {
        const double step = 1e-10;
        auto rp = r, rm = r;
        rp[i][a] += step;
        rm[i][a] -= step;
        const auto fp = coulomb_forces(rp, q), fm = coulomb_forces(rm, q);
        for (std::size_t j = 0; j < 4; ++j)
          for (int b = 0; b < 3; ++b) {
            double fd = -(fp[j][b] - fm[j][b]) / (2 * step);
            if (i == j && a == b) fd += k[a];
            const double an = h(3 * j + b, 3 * i + a);
            CHECK(an == doctest::Approx(fd).epsilon(1e-5).scale(1e-3 * std::abs(h(0, 0))));
          }
      }
  }
}
