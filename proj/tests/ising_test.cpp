#include <gtest/gtest.h>

#include <bit>
#include <cmath>

#include "qem/diagonalize.hpp"
#include "qem/ising.hpp"
#include "qem/readout.hpp"
#include "qem/rng.hpp"
#include "qem/state.hpp"

using namespace qem;

namespace {

// Brute-force noisy mean of a diagonal Hamiltonian on a basis state: sum over
// all flip masks of the recorded-state energy.
double enumerate_noisy_mean(const PauliTermSum& h, std::uint64_t basis, double flip_p) {
    const int n = h.n_qubits;
    const std::uint64_t dim = std::uint64_t{1} << n;
    double acc = 0.0;
    for (std::uint64_t mask = 0; mask < dim; ++mask) {
        const double prob = std::pow(flip_p, std::popcount(mask)) *
                            std::pow(1.0 - flip_p, n - std::popcount(mask));
        const std::uint64_t recorded = basis ^ mask;
        double energy = 0.0;
        for (const auto& t : h.terms) {
            const std::uint64_t zmask = t.string.mask_of(Pauli::Z);
            energy += t.coeff * ((std::popcount(recorded & zmask) & 1) ? -1.0 : 1.0);
        }
        acc += prob * energy;
    }
    return acc;
}

} // namespace

TEST(Builders, LongitudinalTermList) {
    PauliTermSum h = li_hamiltonian({2, 1.0, 0.0});
    // the N=2 ring keeps both wrap bonds
    ASSERT_EQ(h.terms.size(), 2u);
    EXPECT_EQ(h.terms[0].string.label(), "ZZ");
    EXPECT_EQ(h.terms[1].string.label(), "ZZ");
    EXPECT_DOUBLE_EQ(h.terms[0].coeff, 1.0);

    PauliTermSum full = li_hamiltonian({4, -1.0, 2.0});
    ASSERT_EQ(full.terms.size(), 8u);
    EXPECT_EQ(full.terms[3].string.label(), "ZIIZ"); // wrap bond 4-1
}

TEST(Builders, TransverseTermList) {
    PauliTermSum h = ti_hamiltonian({4, -1.0, 2.0});
    ASSERT_EQ(h.terms.size(), 8u);
    int zz = 0, x = 0;
    for (const auto& t : h.terms) {
        if (t.string.mask_of(Pauli::X)) {
            EXPECT_DOUBLE_EQ(t.coeff, 2.0);
            EXPECT_EQ(t.string.support_size(), 1);
            ++x;
        } else {
            EXPECT_DOUBLE_EQ(t.coeff, -1.0);
            EXPECT_EQ(t.string.support_size(), 2);
            ++zz;
        }
    }
    EXPECT_EQ(zz, 4);
    EXPECT_EQ(x, 4);
    EXPECT_THROW(ti_hamiltonian({1, -1.0, 2.0}), std::invalid_argument);
}

TEST(LiGroundEnergy, ClosedForm) {
    EnergyDecomposition e = li_ground_energy({4, -1.0, 2.0});
    EXPECT_DOUBLE_EQ(e.total, -12.0);
    EXPECT_DOUBLE_EQ(e.e_zz, -4.0);
    EXPECT_DOUBLE_EQ(e.e_z, -8.0);

    EXPECT_DOUBLE_EQ(li_ground_energy({8, -1.0, 2.0}).total, -24.0);
    EXPECT_DOUBLE_EQ(li_ground_energy({4, -1.0, 0.0}).total, -4.0); // decoupled case

    EXPECT_THROW(li_ground_energy({4, 1.0, 2.0}), std::domain_error);
    EXPECT_THROW(li_ground_energy({4, -1.0, -2.0}), std::domain_error);
}

TEST(LiGroundEnergy, MatchesDiagonalizationAtN8) {
    auto [energy, state] = ground_state(li_hamiltonian({8, -1.0, 2.0}));
    EXPECT_NEAR(energy, li_ground_energy({8, -1.0, 2.0}).total, 1e-9);
    EXPECT_NEAR(std::norm(state[255]), 1.0, 1e-9); // all-|1>
}

TEST(LiNoisyMean, ClosedFormAndOracle) {
    const IsingParams params{4, -1.0, 2.0};
    EXPECT_NEAR(li_noisy_mean(params, 0.05), -10.44, 1e-12);
    EXPECT_NEAR(li_noisy_mean(params, 0.5), 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(li_noisy_mean(params, 0.0), -12.0);

    // flip enumeration on the all-|1> ground state
    EXPECT_NEAR(enumerate_noisy_mean(li_hamiltonian(params), 0b1111, 0.05), -10.44, 1e-12);
    EXPECT_NEAR(enumerate_noisy_mean(li_hamiltonian(params), 0b1111, 0.31),
                li_noisy_mean(params, 0.31), 1e-12);
}

TEST(LiNoisyMean, MatchesExpectedNoisyOperator) {
    const IsingParams params{4, -1.0, 2.0};
    const PauliTermSum h = li_hamiltonian(params);
    const StateVector ground = StateVector::basis(4, 0b1111);
    for (int i = 0; i < 20; ++i) {
        const double p = i / 19.0;
        const ReadoutModel model = ReadoutModel::uniform(4, p);
        double channel = 0.0;
        for (const auto& t : h.terms)
            channel += t.coeff * expectation(ground, expected_noisy_operator(t.string, model));
        EXPECT_NEAR(channel, li_noisy_mean(params, p), 1e-12);
    }
}

TEST(LiNoisyMean, FlipSymmetryInFieldTerm) {
    // exchanging p and 1-p flips the sign of the field contribution only
    const IsingParams params{6, -0.7, 1.3};
    const EnergyDecomposition e = li_ground_energy(params);
    for (double p : {0.1, 0.23, 0.42}) {
        const double direct = li_noisy_mean(params, p);
        const double mirrored = li_noisy_mean(params, 1.0 - p);
        const double f = 1.0 - 2.0 * p;
        EXPECT_NEAR(direct - mirrored, 2.0 * f * e.e_z, 1e-12);
        EXPECT_NEAR(direct + mirrored, 2.0 * f * f * e.e_zz, 1e-12);
    }
}

TEST(TiExactGroundEnergy, MatchesDenseDiagonalization) {
    for (int n : {2, 3, 4, 6, 8}) {
        const IsingParams params{n, -1.0, 2.0};
        auto [energy, state] = ground_state(ti_hamiltonian(params));
        EXPECT_NEAR(ti_exact_ground_energy(params).total, energy, 1e-9) << "N=" << n;
    }
    // a second parameter point
    for (int n : {2, 4, 5}) {
        const IsingParams params{n, -0.6, 0.9};
        auto [energy, state] = ground_state(ti_hamiltonian(params));
        EXPECT_NEAR(ti_exact_ground_energy(params).total, energy, 1e-9) << "N=" << n;
    }
}

TEST(TiExactGroundEnergy, DegenerateLimits) {
    // h = 0: classical value NJ
    EXPECT_NEAR(ti_exact_ground_energy({4, -1.0, 0.0}).total, -4.0, 1e-12);
    auto [e_h0, s_h0] = ground_state(ti_hamiltonian({6, -1.0, 0.0}));
    EXPECT_NEAR(ti_exact_ground_energy({6, -1.0, 0.0}).total, e_h0, 1e-9);
    // J = 0: free spins in the transverse field
    EXPECT_NEAR(ti_exact_ground_energy({5, 0.0, 2.0}).total, -10.0, 1e-12);
}

TEST(TiExactGroundEnergy, DecompositionIdentities) {
    Rng rng(211);
    for (int rep = 0; rep < 30; ++rep) {
        const IsingParams params{2 + static_cast<int>(rng.next_below(7)),
                                 -2.0 * rng.next_double() - 0.01, 2.0 * rng.next_double()};
        const EnergyDecomposition e = ti_exact_ground_energy(params);
        EXPECT_NEAR(e.e1, e.e_zz + e.e_x, 1e-12 * std::abs(e.e1) + 1e-12);
        EXPECT_NEAR(e.e2, -e.e_zz, 1e-12 * std::abs(e.e2) + 1e-12);
        EXPECT_NEAR(e.e3, e.e_zz - e.e_x, 1e-12 * std::abs(e.e3) + 1e-12);
        EXPECT_NEAR(e.total, e.e1, 1e-12 * std::abs(e.total) + 1e-12);
    }
}

TEST(TiNoisyMean, LimitsAndRouteAgreement) {
    const IsingParams params{4, -1.0, 2.0};
    EXPECT_NEAR(ti_noisy_mean(params, 0.0), ti_exact_ground_energy(params).total, 1e-12);
    EXPECT_NEAR(ti_noisy_mean(params, 0.5), 0.0, 1e-12);
    // |J| = |h|: the two groups contribute equally and cancel at p = 1
    EXPECT_NEAR(ti_noisy_mean({4, -1.5, 1.5}, 1.0), 0.0, 1e-10);

    // the function asserts both algebraic routes agree; exercise it broadly
    Rng rng(223);
    for (int rep = 0; rep < 50; ++rep) {
        const IsingParams p{2 + static_cast<int>(rng.next_below(7)),
                            -2.0 * rng.next_double() - 0.01, 2.0 * rng.next_double()};
        EXPECT_NO_THROW(ti_noisy_mean(p, rng.next_double()));
    }
}

TEST(DeltaE, NonInteractingFieldPart) {
    // Delta = 2Nh/s for the pure field Hamiltonian
    const IsingParams params{4, -1.0, 2.0};
    EXPECT_DOUBLE_EQ(delta_e(DeltaEModel::li_noninteracting, params, 0.1, 2048),
                     2.0 * 4 * 2.0 / 2048.0);
}

TEST(DeltaE, InteractingEndpoint) {
    const IsingParams params{4, -1.0, 2.0};
    EXPECT_DOUBLE_EQ(delta_e(DeltaEModel::li_interacting, params, 1.0, 512), 0.0);
    // at p = 0.5 the mean E + s p delta must vanish for the pure coupling part
    const double delta = delta_e(DeltaEModel::li_interacting, params, 0.5, 512);
    EXPECT_NEAR(params.n * params.j + 512 * 0.5 * delta, 0.0, 1e-12);
}

TEST(DeltaE, TransverseIdentityWithNoisyMean) {
    const IsingParams params{4, -1.0, 2.0};
    const long shots = 2048;
    for (double p : {0.05, 0.2, 0.5, 0.95}) {
        const double delta = delta_e(DeltaEModel::ti, params, p, shots);
        const double mean = ti_exact_ground_energy(params).total + shots * p * delta;
        EXPECT_NEAR(mean, ti_noisy_mean(params, p), 1e-10);
    }
}

TEST(BinomialHistogramModel, PointMasses) {
    const double e = -12.0, delta = 0.01171875;
    BinomialHistogramModel clean = binomial_histogram_model(e, delta, 100, 0.0);
    EXPECT_DOUBLE_EQ(clean.mean, e);
    EXPECT_DOUBLE_EQ(clean.pmf[100], 1.0);
    EXPECT_DOUBLE_EQ(clean.pmf[0], 0.0);

    BinomialHistogramModel flipped = binomial_histogram_model(e, delta, 100, 1.0);
    EXPECT_DOUBLE_EQ(flipped.mean, e + 100 * delta);
    EXPECT_DOUBLE_EQ(flipped.pmf[0], 1.0);
    EXPECT_DOUBLE_EQ(flipped.energy[0], e + 100 * delta);
}

TEST(BinomialHistogramModel, PmfMomentsMatchMonteCarlo) {
    const long shots = 64;
    const double p = 0.13, e = -5.0, delta = 0.25;
    BinomialHistogramModel model = binomial_histogram_model(e, delta, shots, p);
    double pmf_total = 0.0, pmf_mean = 0.0;
    for (long k = 0; k <= shots; ++k) {
        pmf_total += model.pmf[static_cast<size_t>(k)];
        pmf_mean += model.pmf[static_cast<size_t>(k)] * model.energy[static_cast<size_t>(k)];
    }
    EXPECT_NEAR(pmf_total, 1.0, 1e-12);
    EXPECT_NEAR(pmf_mean, model.mean, 1e-10);

    // binomial draws: k successes out of `shots` at probability 1-p
    Rng rng(227);
    const int reps = 100000;
    double acc = 0.0, acc2 = 0.0;
    for (int i = 0; i < reps; ++i) {
        long k = 0;
        for (long s = 0; s < shots; ++s)
            if (!rng.bernoulli(p)) ++k;
        const double value = e + (shots - k) * delta;
        acc += value;
        acc2 += value * value;
    }
    const double mc_mean = acc / reps;
    const double mc_var = acc2 / reps - mc_mean * mc_mean;
    EXPECT_NEAR(mc_mean, model.mean, 5.0 * std::sqrt(mc_var / reps));
}
