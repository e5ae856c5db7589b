#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <crowdpulse/io.hpp>
#include <crowdpulse/model.hpp>

#include "helpers.hpp"

using namespace crowdpulse;
using Catch::Approx;

TEST_CASE("crowding relation ties the four frequencies together") {
  const SystemParams p = testutil::params();
  CHECK(p.delta == Approx(mhz_to_radns(45.0)).epsilon(1e-12));
  CHECK(p.omega2 + p.Delta == Approx(p.omega1 + p.delta).epsilon(1e-14));

  CHECK_THROWS_AS(SystemParams::from_frequencies(ghz_to_radns(5.9), ghz_to_radns(5.5),
                                                 mhz_to_radns(-350.0)),
                  std::invalid_argument);  // delta would be negative
  CHECK_THROWS_AS(SystemParams::from_crowding(ghz_to_radns(5.5), 0.0, mhz_to_radns(45.0)),
                  std::invalid_argument);
}

TEST_CASE("eigenfrequencies match their definitions") {
  const SystemParams p = testutil::params();

  SECTION("values at Lambda1 = 0") {
    const EigenFrequencies f = eigenfrequencies(p, 0.0);
    CHECK(f.d11 == Approx(0.0).margin(1e-15));
    CHECK(f.d21 == Approx(-two_pi * 0.350).epsilon(1e-12));
    CHECK(f.d12 == Approx(two_pi * 0.395).epsilon(1e-12));
    CHECK(f.d22 == Approx(two_pi * 0.045).epsilon(1e-12));
  }

  SECTION("Lambda1 = delta zeros the crowded transition") {
    const EigenFrequencies f = eigenfrequencies(p, p.delta);
    CHECK(f.d22 == Approx(0.0).margin(1e-15));
  }

  SECTION("uniform shift under Lambda1") {
    const double shift = two_pi * 0.001;
    const EigenFrequencies f0 = eigenfrequencies(p, 0.0);
    const EigenFrequencies f1 = eigenfrequencies(p, shift);
    CHECK(f1.d11 - f0.d11 == Approx(-shift).epsilon(1e-12));
    CHECK(f1.d21 - f0.d21 == Approx(-shift).epsilon(1e-12));
    CHECK(f1.d12 - f0.d12 == Approx(-shift).epsilon(1e-12));
    CHECK(f1.d22 - f0.d22 == Approx(-shift).epsilon(1e-12));
  }

  SECTION("identities hold for random parameters") {
    std::mt19937_64 rng(42);
    for (int i = 0; i < 50; ++i) {
      const SystemParams q = SystemParams::from_crowding(
          ghz_to_radns(4.0 + 2.0 * uniform_unit(rng)),
          mhz_to_radns(-500.0 + 300.0 * uniform_unit(rng)),
          mhz_to_radns(20.0 + 80.0 * uniform_unit(rng)));
      const double L = mhz_to_radns(-10.0 + 20.0 * uniform_unit(rng));
      const EigenFrequencies f = eigenfrequencies(q, L);
      CHECK(f.d21 - f.d11 == Approx(q.Delta).epsilon(1e-12));
      CHECK(f.d22 - f.d11 == Approx(q.delta).epsilon(1e-12));
      CHECK(f.d22 - f.d12 == Approx(q.Delta).epsilon(1e-12).margin(1e-12));
    }
  }
}

TEST_CASE("interaction Hamiltonian structure") {
  const SystemParams p = testutil::params();

  SECTION("phases are 1 at t = 0") {
    auto [h1, h2] = interaction_hamiltonian(p, 0.0, cd{0.1, 0.0}, 0.0);
    CHECK(std::abs(h1(1, 0) - cd{0.05, 0.0}) < 1e-15);
    CHECK(std::abs(h1(2, 1) - cd{0.05 * std::sqrt(2.0), 0.0}) < 1e-15);
    CHECK(std::abs(h2(1, 0) - cd{0.05, 0.0}) < 1e-15);
    CHECK(hermiticity_defect(h1) < 1e-15);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(h1(i, i)) == 0.0);
  }

  SECTION("zero drive gives zero matrices") {
    auto [h1, h2] = interaction_hamiltonian(p, two_pi * 0.001, cd{0.0, 0.0}, 7.3);
    CHECK(h1.cwiseAbs().maxCoeff() == 0.0);
    CHECK(h2.cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("Hermitian for random drive values and times") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
      const cd chi{-1.0 + 2.0 * uniform_unit(rng), -1.0 + 2.0 * uniform_unit(rng)};
      const double t = 60.0 * uniform_unit(rng);
      auto [h1, h2] = interaction_hamiltonian(p, two_pi * 0.002, chi, t);
      CHECK(hermiticity_defect(h1) < 1e-14);
      CHECK(hermiticity_defect(h2) < 1e-14);
    }
  }
}

TEST_CASE("rotating-frame Hamiltonian diagonal and Hermiticity") {
  const SystemParams p = testutil::params();

  SECTION("projector coefficients at chi = 0, Lambda1 = 0") {
    const Matrix9c h = rotating_hamiltonian(p, 0.0, cd{0.0, 0.0}, 0.0);
    auto diag_entry = [&](int j1, int j2) { return h(3 * j1 + j2, 3 * j1 + j2).real(); };
    CHECK(diag_entry(0, 0) == Approx(0.0).margin(1e-15));
    CHECK(diag_entry(1, 0) == Approx(0.0).margin(1e-12));                  // -Lambda1
    CHECK(diag_entry(2, 0) == Approx(-two_pi * 0.350).epsilon(1e-12));     // Delta-2L
    CHECK(diag_entry(0, 1) == Approx(two_pi * 0.395).epsilon(1e-12));      // delta-Delta-L
    CHECK(diag_entry(0, 2) == Approx(two_pi * 0.440).epsilon(1e-12));      // 2delta-Delta-2L
    // every diagonal entry is the sum of the two per-qutrit projector terms
    const double q1[3] = {0.0, 0.0, -two_pi * 0.350};
    const double q2[3] = {0.0, two_pi * 0.395, two_pi * 0.440};
    for (int j1 = 0; j1 < 3; ++j1)
      for (int j2 = 0; j2 < 3; ++j2)
        CHECK(diag_entry(j1, j2) == Approx(q1[j1] + q2[j2]).margin(1e-12));
  }

  SECTION("Hermitian for random drives") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 50; ++i) {
      const cd chi{-0.5 + uniform_unit(rng), -0.5 + uniform_unit(rng)};
      const Matrix9c h = rotating_hamiltonian(p, two_pi * 0.003, chi, 3.0);
      CHECK(hermiticity_defect(h) < 1e-14);
    }
  }
}

TEST_CASE("target unitaries") {
  SECTION("identity target") {
    const Matrix9c u = target_unitary(TargetRotation(cd{0.0, 0.0}, cd{0.0, 0.0}));
    CHECK((u - Matrix9c::Identity()).cwiseAbs().maxCoeff() < 1e-15);
  }

  SECTION("X_pi on qubit 1 gives -i sigma_x block") {
    const Matrix9c u = target_unitary(TargetRotation(cd{pi, 0.0}, cd{0.0, 0.0}));
    Matrix3c block = Matrix3c::Zero();
    block(0, 1) = cd{0.0, -1.0};
    block(1, 0) = cd{0.0, -1.0};
    block(2, 2) = cd{1.0, 0.0};
    const Matrix9c expected = kron(block, Matrix3c::Identity());
    CHECK((u - expected).cwiseAbs().maxCoeff() < 1e-14);
  }

  SECTION("complex angle matches a power-series exponential") {
    const cd theta{pi / 2.0, pi / 2.0};
    Matrix3c gen = Matrix3c::Zero();
    gen(0, 1) = theta;
    gen(1, 0) = std::conj(theta);
    Matrix3c term = Matrix3c::Identity();
    Matrix3c series = Matrix3c::Identity();
    const Matrix3c a = cd{0.0, -0.5} * gen;
    for (int k = 1; k < 40; ++k) {
      term = Matrix3c(term * a) / double(k);
      series += term;
    }
    const Matrix9c u = target_unitary(TargetRotation(theta, cd{0.0, 0.0}));
    const Matrix9c expected = kron(series, Matrix3c::Identity());
    CHECK((u - expected).cwiseAbs().maxCoeff() < 1e-13);
  }

  SECTION("unitary and block-preserving for random angles") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 50; ++i) {
      const cd t1{-3.0 + 6.0 * uniform_unit(rng), -3.0 + 6.0 * uniform_unit(rng)};
      const cd t2{-3.0 + 6.0 * uniform_unit(rng), -3.0 + 6.0 * uniform_unit(rng)};
      const Matrix9c u = target_unitary(TargetRotation(t1, t2));
      CHECK(unitarity_defect(u) < 1e-12);
      // no coupling into qutrit-2 leakage states from computational ones
      for (int in : {0, 1, 3, 4})
        for (int leak : {2, 5, 6, 7, 8}) CHECK(std::abs(u(leak, in)) < 1e-14);
    }
  }

  SECTION("angles beyond 2*pi are rejected") {
    CHECK_THROWS_AS(TargetRotation(cd{2.5 * two_pi, 0.0}, cd{0.0, 0.0}),
                    std::invalid_argument);
  }
}

TEST_CASE("frame transformations") {
  const SystemParams p = testutil::params();
  const FrameSpec interaction = FrameSpec::interaction(p);

  SECTION("tg = 0 leaves U unchanged") {
    const Matrix9c u = target_unitary(TargetRotation(cd{1.0, 0.3}, cd{0.2, 0.0}));
    CHECK((transform_frame(u, interaction, 0.0) - u).cwiseAbs().maxCoeff() < 1e-14);
  }

  SECTION("identity maps to pure frame phases") {
    const double tg = 20.0;
    const Matrix9c r = transform_frame(Matrix9c::Identity(), interaction, tg);
    for (int j1 = 0; j1 < 3; ++j1)
      for (int j2 = 0; j2 < 3; ++j2) {
        const int i = 3 * j1 + j2;
        const double phase = -(interaction.level_freq[0][j1] + interaction.level_freq[1][j2]) * tg;
        CHECK(std::abs(r(i, i) - std::polar(1.0, phase)) < 1e-12);
        CHECK(std::abs(std::abs(r(i, i)) - 1.0) < 1e-14);
      }
  }

  SECTION("round-trip through the frame map") {
    std::mt19937_64 rng(13);
    const Matrix9c u = target_unitary(
        TargetRotation(cd{1.1, -0.4}, cd{-0.6, 0.9}));
    const double tg = 37.0;
    const Matrix9c forward = transform_frame(u, interaction, tg);
    const Matrix9c back = frame_matrix(interaction, tg).adjoint() * forward *
                          frame_matrix(interaction, 0.0);
    CHECK((back - u).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(unitarity_defect(forward) < 1e-12);
    (void)rng;
  }
}
