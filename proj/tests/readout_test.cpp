#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "qem/distribution.hpp"
#include "qem/readout.hpp"
#include "qem/state.hpp"

using namespace qem;

namespace {

StateVector random_circuit_state(int n, Rng& rng) {
    StateVector s(n);
    for (int q = 1; q <= n; ++q) {
        s.apply_rx(q, 2.0 * std::numbers::pi * rng.next_double());
        s.apply_rz(q, 2.0 * std::numbers::pi * rng.next_double());
    }
    return s;
}

// Exhaustive flip-pattern expectation of a diagonal Z string on noisy counts:
// sum over basis states and flip masks, weighting by the per-bit flip
// probabilities.  Independent of the random-operator machinery.
double enumerated_noisy_expectation(const StateVector& state, std::uint64_t zmask,
                                    const ReadoutModel& model) {
    const std::vector<double> probs = state.probabilities();
    const int n = state.n_qubits();
    double acc = 0.0;
    for (std::uint64_t j = 0; j < probs.size(); ++j) {
        if (probs[j] == 0.0) continue;
        for (std::uint64_t flip_mask = 0; flip_mask < probs.size(); ++flip_mask) {
            double p = 1.0;
            for (int q = 1; q <= n; ++q) {
                const bool bit = j >> (q - 1) & 1;
                const double pf = bit ? model.p1(q) : model.p0(q);
                p *= (flip_mask >> (q - 1) & 1) ? pf : 1.0 - pf;
            }
            const std::uint64_t recorded = j ^ flip_mask;
            acc += probs[j] * p * ((std::popcount(recorded & zmask) & 1) ? -1.0 : 1.0);
        }
    }
    return acc;
}

} // namespace

TEST(ApplyReadoutNoise, NoiselessModelIsIdentity) {
    BitstringDistribution counts(2, WeightKind::counts);
    counts[1] = 40;
    counts[2] = 60;
    BitstringDistribution noisy = apply_readout_noise(counts, ReadoutModel::noiseless(2), 1u);
    for (std::uint64_t i = 0; i < counts.dim(); ++i) EXPECT_DOUBLE_EQ(noisy[i], counts[i]);
}

TEST(ApplyReadoutNoise, CertainFlipsAreDeterministic) {
    BitstringDistribution counts(2, WeightKind::counts);
    counts[0] = 1000; // |00>
    BitstringDistribution noisy = apply_readout_noise(counts, ReadoutModel::uniform(2, 1.0), 2u);
    EXPECT_DOUBLE_EQ(noisy[3], 1000.0);
    EXPECT_DOUBLE_EQ(noisy.total(), 1000.0);
}

TEST(ApplyReadoutNoise, BinomialBoundOnFlipRate) {
    const long shots = 100000;
    BitstringDistribution counts(1, WeightKind::counts);
    counts[0] = static_cast<double>(shots);
    BitstringDistribution noisy = apply_readout_noise(counts, ReadoutModel::uniform(1, 0.05), 3u);
    const double rate = noisy[1] / static_cast<double>(shots);
    EXPECT_NEAR(rate, 0.05, 5.0 * std::sqrt(0.05 * 0.95 / static_cast<double>(shots)));
    EXPECT_DOUBLE_EQ(noisy.total(), static_cast<double>(shots));
}

TEST(ApplyReadoutNoise, SizeMismatchThrows) {
    BitstringDistribution counts(2, WeightKind::counts);
    counts[0] = 1;
    EXPECT_THROW(apply_readout_noise(counts, ReadoutModel::noiseless(3), 1u), std::invalid_argument);
}

TEST(ApplyReadoutNoiseExact, MatchesEnumeratedChannel) {
    Rng rng(41);
    StateVector s = random_circuit_state(2, rng);
    const ReadoutModel model({{0.1, 0.2}, {0.05, 0.3}});
    BitstringDistribution exact(2, WeightKind::probability);
    {
        BitstringDistribution clean(2, WeightKind::probability);
        const std::vector<double> p = s.probabilities();
        for (std::uint64_t i = 0; i < clean.dim(); ++i) clean[i] = p[i];
        exact = apply_readout_noise_exact(clean, model);
    }
    for (std::uint64_t zmask = 1; zmask < 4; ++zmask)
        EXPECT_NEAR(exact.z_expectation(zmask), enumerated_noisy_expectation(s, zmask, model), 1e-12);
}

TEST(NoisyOperatorDistribution, SingleZFourOutcomes) {
    const double p = 0.05;
    NoisyOperatorDistribution d =
        noisy_operator_distribution(PauliString::from_label("Z"), ReadoutModel::uniform(1, p));
    ASSERT_EQ(d.outcomes.size(), 4u);
    // {+Z, -1, +1, -Z} with probabilities {(1-p)^2, p(1-p), (1-p)p, p^2}
    EXPECT_NEAR(d.outcomes[0].probability, (1 - p) * (1 - p), 1e-15);
    EXPECT_EQ(d.outcomes[0].sign, +1);
    EXPECT_EQ(d.outcomes[0].z_mask, 1u);
    EXPECT_NEAR(d.outcomes[1].probability, p * (1 - p), 1e-15);
    EXPECT_EQ(d.outcomes[1].sign, -1);
    EXPECT_EQ(d.outcomes[1].z_mask, 0u);
    EXPECT_NEAR(d.outcomes[2].probability, (1 - p) * p, 1e-15);
    EXPECT_EQ(d.outcomes[2].sign, +1);
    EXPECT_NEAR(d.outcomes[3].probability, p * p, 1e-15);
    EXPECT_EQ(d.outcomes[3].sign, -1);
    EXPECT_EQ(d.outcomes[3].z_mask, 1u);
    double total = 0.0;
    for (const auto& o : d.outcomes) total += o.probability;
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(NoisyOperatorDistribution, IdentityUntouched) {
    NoisyOperatorDistribution d =
        noisy_operator_distribution(PauliString::identity(2), ReadoutModel::uniform(2, 0.3));
    ASSERT_EQ(d.outcomes.size(), 1u);
    EXPECT_DOUBLE_EQ(d.outcomes[0].probability, 1.0);
    EXPECT_EQ(d.outcomes[0].sign, +1);
    EXPECT_EQ(d.outcomes[0].z_mask, 0u);
}

TEST(NoisyOperatorDistribution, ZZCollectsToSquaredFactor) {
    const double p = 0.1;
    NoisyOperatorDistribution d =
        noisy_operator_distribution(PauliString::from_label("ZZ"), ReadoutModel::uniform(2, p));
    ASSERT_EQ(d.outcomes.size(), 16u);
    double coeff_zz = 0.0, total = 0.0;
    for (const auto& o : d.outcomes) {
        total += o.probability;
        if (o.z_mask == 3u) coeff_zz += o.sign * o.probability;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(coeff_zz, (1 - 2 * p) * (1 - 2 * p), 1e-12);
}

TEST(NoisyOperatorDistribution, MixedSingleFlipsCancelAtSymmetricP) {
    NoisyOperatorDistribution d =
        noisy_operator_distribution(PauliString::from_label("Z"), ReadoutModel::uniform(1, 0.23));
    // the two identity outcomes carry opposite signs and equal probability
    EXPECT_NEAR(d.outcomes[1].probability, d.outcomes[2].probability, 1e-15);
    EXPECT_EQ(d.outcomes[1].sign * d.outcomes[2].sign, -1);
    EXPECT_NEAR(d.outcomes[1].probability * d.outcomes[1].sign +
                    d.outcomes[2].probability * d.outcomes[2].sign,
                0.0, 1e-15);
}

TEST(NoisyOperatorDistribution, RejectsNonDiagonalLetters) {
    EXPECT_THROW(noisy_operator_distribution(PauliString::from_label("X"), ReadoutModel::noiseless(1)),
                 std::invalid_argument);
}

TEST(ExpectedNoisyOperator, AsymmetricSingleZ) {
    PauliTermSum e =
        expected_noisy_operator(PauliString::from_label("Z"), ReadoutModel::uniform(1, 0.1, 0.2));
    // 0.7 Z + 0.1 1, from enumerating the four outcomes
    ASSERT_EQ(e.terms.size(), 2u);
    double z_coeff = 0.0, id_coeff = 0.0;
    for (const auto& t : e.terms)
        (t.string.support_size() == 1 ? z_coeff : id_coeff) += t.coeff;
    EXPECT_NEAR(z_coeff, 0.7, 1e-15);
    EXPECT_NEAR(id_coeff, 0.1, 1e-15);
}

TEST(ExpectedNoisyOperator, SymmetricCases) {
    const double p = 0.07;
    PauliTermSum single =
        expected_noisy_operator(PauliString::from_label("Z"), ReadoutModel::uniform(1, p));
    double z = 0.0;
    for (const auto& t : single.terms)
        if (t.string.support_size() == 1) z += t.coeff;
    EXPECT_NEAR(z, 1.0 - 2.0 * p, 1e-15);

    PauliTermSum dbl =
        expected_noisy_operator(PauliString::from_label("ZZ"), ReadoutModel::uniform(2, p));
    double zz = 0.0;
    for (const auto& t : dbl.terms)
        if (t.string.support_size() == 2) zz += t.coeff;
    EXPECT_NEAR(zz, (1.0 - 2.0 * p) * (1.0 - 2.0 * p), 1e-15);
}

TEST(ExpectedNoisyOperator, MatchesOutcomeDistributionOnRandomStates) {
    Rng rng(53);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 2 + static_cast<int>(rng.next_below(2));
        StateVector s = StateVector::random(n, rng);
        std::vector<QubitFlips> flips;
        for (int q = 0; q < n; ++q) flips.push_back({rng.next_double(), rng.next_double()});
        ReadoutModel model(flips);
        PauliString p = PauliString::identity(n);
        for (int q = 1; q <= n; ++q)
            if (rng.bernoulli(0.7)) p.set(q, Pauli::Z);
        const double via_sum = expectation(s, expected_noisy_operator(p, model));
        const double via_outcomes = noisy_operator_distribution(p, model).expectation_on(s);
        const double via_enumeration = enumerated_noisy_expectation(s, p.mask_of(Pauli::Z), model);
        EXPECT_NEAR(via_sum, via_outcomes, 1e-12);
        EXPECT_NEAR(via_sum, via_enumeration, 1e-12);
    }
}

// The random-operator and flipped-readout viewpoints produce the same
// measurement statistics.
TEST(Consistency, SampledNoiseMatchesExpectedOperator) {
    Rng rng(61);
    const long shots = 4000;
    for (int rep = 0; rep < 200; ++rep) {
        const int n = 1 + static_cast<int>(rng.next_below(2));
        StateVector s = random_circuit_state(n, rng);
        std::vector<QubitFlips> flips;
        for (int q = 0; q < n; ++q) flips.push_back({0.3 * rng.next_double(), 0.3 * rng.next_double()});
        ReadoutModel model(flips);
        PauliString p = PauliString::identity(n);
        p.set(1 + static_cast<int>(rng.next_below(n)), Pauli::Z);

        Rng task = rng.split(static_cast<std::uint64_t>(rep));
        BitstringDistribution counts = sample_bitstrings(s, shots, task);
        BitstringDistribution noisy = apply_readout_noise(counts, model, task);
        const double sampled = noisy.z_expectation(p.mask_of(Pauli::Z));
        const double predicted = expectation(s, expected_noisy_operator(p, model));
        // per-shot values are +-1: SE <= 1/sqrt(shots)
        EXPECT_NEAR(sampled, predicted, 5.0 / std::sqrt(static_cast<double>(shots)));
    }
}

TEST(TensorFactorization, DisjointOutcomesAreUncorrelated) {
    const ReadoutModel model({{0.1, 0.25}, {0.2, 0.05}});
    NoisyOperatorDistribution d =
        noisy_operator_distribution(PauliString::from_label("ZZ"), model);
    NoisyOperatorDistribution d1 =
        noisy_operator_distribution(PauliString::from_label("IZ"), model);
    NoisyOperatorDistribution d2 =
        noisy_operator_distribution(PauliString::from_label("ZI"), model);

    // covariance of the per-qubit outcome values evaluated on any product of
    // eigenstates is zero; check it on the +1 eigenstate of both Z's
    StateVector zero(2);
    double joint = d.expectation_on(zero);
    double m1 = d1.expectation_on(zero), m2 = d2.expectation_on(zero);
    EXPECT_NEAR(joint, m1 * m2, 1e-12);
}

TEST(Calibration, ExactAtDeterministicFlips) {
    CalibrationRecord zero = simulate_calibration(ReadoutModel::noiseless(2), 256, 3, 5u);
    for (const auto& q : zero.qubits) {
        EXPECT_DOUBLE_EQ(q.p0, 0.0);
        EXPECT_DOUBLE_EQ(q.p1, 0.0);
    }
    CalibrationRecord one = simulate_calibration(ReadoutModel::uniform(1, 1.0), 128, 2, 6u);
    EXPECT_DOUBLE_EQ(one.qubits[0].p0, 1.0);
    EXPECT_DOUBLE_EQ(one.qubits[0].p1, 1.0);
}

TEST(Calibration, BinomialStandardErrorBound) {
    const long s_cal = 8192;
    const int rounds = 10;
    CalibrationRecord rec =
        simulate_calibration(ReadoutModel::uniform(1, 0.1), s_cal, rounds, 7u);
    const double se = std::sqrt(0.1 * 0.9 / static_cast<double>(s_cal * rounds));
    EXPECT_NEAR(rec.qubits[0].p0, 0.1, 4.0 * se);
    EXPECT_NEAR(rec.qubits[0].p1, 0.1, 4.0 * se);
    EXPECT_EQ(rec.qubits[0].raw_p0.size(), static_cast<size_t>(rounds));
    // aggregate is the plain mean of the rounds
    double mean = 0.0;
    for (double v : rec.qubits[0].raw_p0) mean += v;
    EXPECT_NEAR(rec.qubits[0].p0, mean / rounds, 1e-15);
}

TEST(CorrelatedNoise, IdentityResponseKeepsCounts) {
    CorrelatedBlockModel block;
    block.qubits = {1, 2};
    block.response = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    BitstringDistribution counts(3, WeightKind::counts);
    counts[5] = 100;
    counts[2] = 50;
    BitstringDistribution noisy = apply_correlated_noise(counts, block, 8u);
    for (std::uint64_t i = 0; i < counts.dim(); ++i) EXPECT_DOUBLE_EQ(noisy[i], counts[i]);
}

TEST(CorrelatedNoise, PermutationResponseRelabels) {
    // swap block patterns 01 <-> 10
    CorrelatedBlockModel block;
    block.qubits = {1, 2};
    block.response = {{1, 0, 0, 0}, {0, 0, 1, 0}, {0, 1, 0, 0}, {0, 0, 0, 1}};
    BitstringDistribution counts(2, WeightKind::counts);
    counts[1] = 77; // block pattern 01
    BitstringDistribution noisy = apply_correlated_noise(counts, block, 9u);
    EXPECT_DOUBLE_EQ(noisy[2], 77.0);
    EXPECT_DOUBLE_EQ(noisy[1], 0.0);
}

TEST(CorrelatedNoise, ProductResponseMatchesIndependentFlips) {
    // response built from independent per-qubit flips must be statistically
    // indistinguishable from apply_readout_noise; chi-square on 1e5 shots
    const double p0a = 0.1, p1a = 0.2, p0b = 0.15, p1b = 0.05;
    auto flip1 = [&](int bit_in, int bit_out, double p0, double p1) {
        const double flip = bit_in ? p1 : p0;
        return bit_out == bit_in ? 1.0 - flip : flip;
    };
    CorrelatedBlockModel block;
    block.qubits = {1, 2};
    block.response.assign(4, std::vector<double>(4, 0.0));
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j)
            block.response[static_cast<size_t>(j)][static_cast<size_t>(k)] =
                flip1(k & 1, j & 1, p0a, p1a) * flip1(k >> 1 & 1, j >> 1 & 1, p0b, p1b);

    const long shots = 100000;
    BitstringDistribution counts(2, WeightKind::counts);
    counts[0] = shots / 2;
    counts[3] = shots - shots / 2;
    BitstringDistribution via_block = apply_correlated_noise(counts, block, 10u);
    // expected cell counts from the exact per-qubit channel
    BitstringDistribution exact =
        apply_readout_noise_exact(counts.normalized(), ReadoutModel({{p0a, p1a}, {p0b, p1b}}));
    double chi2 = 0.0;
    for (std::uint64_t i = 0; i < 4; ++i) {
        const double expected = exact[i] * static_cast<double>(shots);
        ASSERT_GT(expected, 5.0);
        chi2 += (via_block[i] - expected) * (via_block[i] - expected) / expected;
    }
    EXPECT_LT(chi2, 21.10751); // dof 3, significance 1e-4
}

TEST(CorrelatedNoise, RejectsNonStochasticAndOverlappingBlocks) {
    CorrelatedBlockModel bad;
    bad.qubits = {1, 2};
    bad.response = {{0.9, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    BitstringDistribution counts(2, WeightKind::counts);
    counts[0] = 1;
    EXPECT_THROW(apply_correlated_noise(counts, bad, 1u), std::invalid_argument);

    ReadoutModel model = ReadoutModel::noiseless(3);
    CorrelatedBlockModel b1;
    b1.qubits = {1, 2};
    b1.response = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    model.add_block(b1);
    CorrelatedBlockModel b2;
    b2.qubits = {2, 3};
    b2.response = b1.response;
    EXPECT_THROW(model.add_block(b2), std::invalid_argument);
}

TEST(Relaxation, ForwardAndInverse) {
    RelaxationModel m{100.0, 0.0};
    EXPECT_DOUBLE_EQ(t1_noisy_expectation(0.37, m), 0.37); // t = 0: identity

    RelaxationModel decayed{1.0, std::log(1.25)}; // survival 0.8
    EXPECT_NEAR(t1_noisy_expectation(1.0, decayed), 1.0, 1e-14); // |0> fixed point
    EXPECT_NEAR(t1_noisy_expectation(-1.0, decayed), -0.6, 1e-14);
    EXPECT_NEAR(t1_correct(-0.6, decayed), -1.0, 1e-14);

    Rng rng(71);
    for (int rep = 0; rep < 100; ++rep) {
        RelaxationModel r{0.5 + rng.next_double(), rng.next_double()};
        const double z = 2.0 * rng.next_double() - 1.0;
        EXPECT_NEAR(t1_correct(t1_noisy_expectation(z, r), r), z, 1e-14);
    }
}

TEST(Relaxation, NonInvertibleAtZeroSurvival) {
    RelaxationModel dead{1e-3, 5000.0}; // survival underflows to 0
    EXPECT_THROW(t1_correct(0.5, dead), std::domain_error);
}

TEST(ReadoutModelJson, RoundTripWithBlocks) {
    ReadoutModel m({{0.01, 0.02}, {0.03, 0.04}, {0.0, 0.0}});
    CorrelatedBlockModel b;
    b.qubits = {1, 2};
    b.response = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    m.add_block(b);
    nlohmann::json j = m;
    ReadoutModel back;
    from_json(j, back);
    EXPECT_EQ(back.n_qubits(), 3);
    EXPECT_DOUBLE_EQ(back.p1(2), 0.04);
    ASSERT_EQ(back.blocks().size(), 1u);
    EXPECT_EQ(back.blocks()[0].qubits, (std::vector<int>{1, 2}));
}

TEST(ReadoutModel, FlagsSingularQubits) {
    ReadoutModel m({{0.4, 0.6}, {0.1, 0.1}});
    EXPECT_TRUE(m.singular(1));
    EXPECT_FALSE(m.singular(2));
    EXPECT_EQ(m.singular_qubits({1, 2}), (std::vector<int>{1}));
}
