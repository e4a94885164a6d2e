#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qem/distribution.hpp"
#include "qem/pauli.hpp"
#include "qem/rng.hpp"
#include "qem/state.hpp"

namespace qem {

inline constexpr double kSingularTol = 1e-9; // |p0 + p1 - 1| below this is singular

struct QubitFlips {
    double p0 = 0.0; // P(record 1 | measured 0)
    double p1 = 0.0; // P(record 0 | measured 1)
};

// Column-stochastic response of a correlated qubit block:
// response[observed][prepared] = p(observe j | prepared k).  Bit i of a block
// index corresponds to qubits[i].
struct CorrelatedBlockModel {
    std::vector<int> qubits; // 1-based register indices
    std::vector<std::vector<double>> response;

    std::uint64_t dim() const { return std::uint64_t{1} << qubits.size(); }

    void validate() const {
        const std::uint64_t d = dim();
        if (response.size() != d) throw std::invalid_argument("response row count != 2^n");
        for (const auto& row : response)
            if (row.size() != d) throw std::invalid_argument("response column count != 2^n");
        for (std::uint64_t k = 0; k < d; ++k) {
            double col = 0.0;
            for (std::uint64_t jj = 0; jj < d; ++jj) {
                if (response[jj][k] < -1e-12) throw std::invalid_argument("negative response entry");
                col += response[jj][k];
            }
            if (std::abs(col - 1.0) > 1e-10)
                throw std::invalid_argument("response column " + std::to_string(k) +
                                            " does not sum to 1");
        }
    }
};

// Per-qubit asymmetric bit-flip probabilities, plus optional correlated
// blocks.  A qubit with p0 + p1 = 1 is flagged non-invertible: its readout
// channel maps every state to one point.
class ReadoutModel {
  public:
    ReadoutModel() = default;
    explicit ReadoutModel(std::vector<QubitFlips> flips) : flips_(std::move(flips)) { validate(); }

    static ReadoutModel uniform(int n_qubits, double p) { return uniform(n_qubits, p, p); }

    static ReadoutModel uniform(int n_qubits, double p0, double p1) {
        return ReadoutModel(std::vector<QubitFlips>(static_cast<size_t>(n_qubits), QubitFlips{p0, p1}));
    }

    static ReadoutModel noiseless(int n_qubits) { return uniform(n_qubits, 0.0); }

    int n_qubits() const { return static_cast<int>(flips_.size()); }
    double p0(int qubit) const { return flips_.at(static_cast<size_t>(qubit - 1)).p0; }
    double p1(int qubit) const { return flips_.at(static_cast<size_t>(qubit - 1)).p1; }
    const std::vector<QubitFlips>& flips() const { return flips_; }

    double gamma_z(int qubit) const { return 1.0 - p0(qubit) - p1(qubit); }
    double gamma_i(int qubit) const { return p1(qubit) - p0(qubit); }

    bool singular(int qubit) const { return std::abs(gamma_z(qubit)) < kSingularTol; }

    std::vector<int> singular_qubits(const std::vector<int>& support) const {
        std::vector<int> bad;
        for (int q : support)
            if (singular(q)) bad.push_back(q);
        return bad;
    }

    const std::vector<CorrelatedBlockModel>& blocks() const { return blocks_; }

    // Blocks must be disjoint; block-local calibration assumes it.
    void add_block(CorrelatedBlockModel block) {
        block.validate();
        for (int q : block.qubits) {
            if (q < 1 || q > n_qubits()) throw std::out_of_range("block qubit out of range");
            for (const auto& other : blocks_)
                for (int o : other.qubits)
                    if (o == q) throw std::invalid_argument("correlated blocks overlap");
        }
        blocks_.push_back(std::move(block));
    }

  private:
    void validate() const {
        for (const auto& f : flips_)
            if (f.p0 < 0.0 || f.p0 > 1.0 || f.p1 < 0.0 || f.p1 > 1.0)
                throw std::invalid_argument("flip probability outside [0,1]");
    }

    std::vector<QubitFlips> flips_;
    std::vector<CorrelatedBlockModel> blocks_;
};

inline void to_json(nlohmann::json& j, const ReadoutModel& m) {
    j = nlohmann::json{{"qubits", nlohmann::json::array()}};
    for (const auto& f : m.flips()) j["qubits"].push_back({{"p0", f.p0}, {"p1", f.p1}});
    if (!m.blocks().empty()) {
        j["blocks"] = nlohmann::json::array();
        for (const auto& b : m.blocks())
            j["blocks"].push_back({{"qubits", b.qubits}, {"response", b.response}});
    }
}

inline void from_json(const nlohmann::json& j, ReadoutModel& m) {
    std::vector<QubitFlips> flips;
    for (const auto& q : j.at("qubits"))
        flips.push_back(QubitFlips{q.at("p0").get<double>(), q.at("p1").get<double>()});
    m = ReadoutModel(std::move(flips));
    if (j.contains("blocks")) {
        for (const auto& jb : j.at("blocks")) {
            CorrelatedBlockModel b;
            b.qubits = jb.at("qubits").get<std::vector<int>>();
            b.response = jb.at("response").get<std::vector<std::vector<double>>>();
            m.add_block(std::move(b));
        }
    }
}

// Flip every recorded bit of every shot independently with p_{q,b}; the total
// count is preserved.
inline BitstringDistribution apply_readout_noise(const BitstringDistribution& counts,
                                                 const ReadoutModel& model, Rng& rng) {
    if (counts.n_qubits() != model.n_qubits())
        throw std::invalid_argument("distribution/model size mismatch");
    if (counts.kind() != WeightKind::counts)
        throw std::invalid_argument("apply_readout_noise expects counts");
    BitstringDistribution noisy(counts.n_qubits(), WeightKind::counts);
    for (std::uint64_t idx = 0; idx < counts.dim(); ++idx) {
        const long c = std::lround(counts[idx]);
        for (long s = 0; s < c; ++s) {
            std::uint64_t recorded = idx;
            for (int q = 1; q <= counts.n_qubits(); ++q) {
                const bool bit = idx >> (q - 1) & 1;
                const double p = bit ? model.p1(q) : model.p0(q);
                if (rng.bernoulli(p)) recorded ^= std::uint64_t{1} << (q - 1);
            }
            noisy[recorded] += 1.0;
        }
    }
    return noisy;
}

inline BitstringDistribution apply_readout_noise(const BitstringDistribution& counts,
                                                 const ReadoutModel& model, std::uint64_t seed) {
    Rng rng(seed);
    return apply_readout_noise(counts, model, rng);
}

// Exact distribution-level form of the same channel: the probability vector is
// pushed through the per-qubit stochastic maps.  Used wherever the variance
// work needs exact noisy distributions rather than sampled ones.
inline BitstringDistribution apply_readout_noise_exact(const BitstringDistribution& dist,
                                                       const ReadoutModel& model) {
    if (dist.n_qubits() != model.n_qubits())
        throw std::invalid_argument("distribution/model size mismatch");
    BitstringDistribution out = dist.kind() == WeightKind::probability ? dist : dist.normalized();
    for (int q = 1; q <= dist.n_qubits(); ++q) {
        const double p0 = model.p0(q), p1 = model.p1(q);
        const std::uint64_t bit = std::uint64_t{1} << (q - 1);
        for (std::uint64_t i = 0; i < out.dim(); ++i) {
            if (i & bit) continue;
            const double w0 = out[i], w1 = out[i | bit];
            out[i] = (1.0 - p0) * w0 + p1 * w1;
            out[i | bit] = p0 * w0 + (1.0 - p1) * w1;
        }
    }
    return out;
}

// Resample each shot's restriction to the block according to the response
// column of its prepared value.
inline BitstringDistribution apply_correlated_noise(const BitstringDistribution& counts,
                                                    const CorrelatedBlockModel& block, Rng& rng) {
    block.validate();
    if (counts.kind() != WeightKind::counts)
        throw std::invalid_argument("apply_correlated_noise expects counts");
    for (int q : block.qubits)
        if (q < 1 || q > counts.n_qubits()) throw std::out_of_range("block qubit out of range");

    const int n_block = static_cast<int>(block.qubits.size());
    BitstringDistribution noisy(counts.n_qubits(), WeightKind::counts);
    for (std::uint64_t idx = 0; idx < counts.dim(); ++idx) {
        const long c = std::lround(counts[idx]);
        if (c == 0) continue;
        std::uint64_t prepared = 0;
        for (int i = 0; i < n_block; ++i)
            if (idx >> (block.qubits[static_cast<size_t>(i)] - 1) & 1) prepared |= std::uint64_t{1} << i;
        // Cumulative response column for CDF inversion.
        std::vector<double> cdf(block.dim());
        double acc = 0.0;
        for (std::uint64_t jj = 0; jj < block.dim(); ++jj) {
            acc += block.response[jj][prepared];
            cdf[jj] = acc;
        }
        for (long s = 0; s < c; ++s) {
            const double u = rng.next_double() * acc;
            std::uint64_t observed =
                static_cast<std::uint64_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            if (observed >= block.dim()) observed = block.dim() - 1;
            std::uint64_t rec = idx;
            for (int i = 0; i < n_block; ++i) {
                const std::uint64_t bit = std::uint64_t{1} << (block.qubits[static_cast<size_t>(i)] - 1);
                if (observed >> i & 1)
                    rec |= bit;
                else
                    rec &= ~bit;
            }
            noisy[rec] += 1.0;
        }
    }
    return noisy;
}

inline BitstringDistribution apply_correlated_noise(const BitstringDistribution& counts,
                                                    const CorrelatedBlockModel& block,
                                                    std::uint64_t seed) {
    Rng rng(seed);
    return apply_correlated_noise(counts, block, rng);
}

// Random-operator view of a noisy {I,Z}-string measurement: the tensor product
// of the per-qubit outcome lists.  Each Z factor contributes exactly
//   +Z with (1-p0)(1-p1),  -1 with p0(1-p1),  +1 with (1-p0)p1,  -Z with p0 p1,
// and identity factors pass through unchanged.
struct NoisyOperatorDistribution {
    struct Outcome {
        double probability = 0.0;
        int sign = +1;
        std::uint64_t z_mask = 0; // surviving Z positions
    };
    int n_qubits = 0;
    std::vector<Outcome> outcomes;

    // E over outcomes of sign * <psi| Z_mask |psi>.
    double expectation_on(const StateVector& state) const {
        const std::vector<double> probs = state.probabilities();
        double acc = 0.0;
        for (const auto& o : outcomes)
            acc += o.probability * o.sign * z_expectation(probs, o.z_mask);
        return acc;
    }
};

inline NoisyOperatorDistribution noisy_operator_distribution(const PauliString& p,
                                                             const ReadoutModel& model) {
    if (!p.diagonal()) throw std::invalid_argument("operator must be over {I,Z}; pre-rotate first");
    if (p.size() != model.n_qubits()) throw std::invalid_argument("operator/model size mismatch");
    const std::vector<int> support = p.support();
    if (support.size() > 10) throw std::invalid_argument("support too large to enumerate outcomes");

    NoisyOperatorDistribution dist;
    dist.n_qubits = p.size();
    dist.outcomes.push_back({1.0, +1, 0});
    for (int q : support) {
        const double p0 = model.p0(q), p1 = model.p1(q);
        const std::uint64_t bit = std::uint64_t{1} << (q - 1);
        struct Factor {
            double prob;
            int sign;
            bool keep_z;
        };
        const Factor factors[4] = {{(1.0 - p0) * (1.0 - p1), +1, true},
                                   {p0 * (1.0 - p1), -1, false},
                                   {(1.0 - p0) * p1, +1, false},
                                   {p0 * p1, -1, true}};
        std::vector<NoisyOperatorDistribution::Outcome> next;
        next.reserve(dist.outcomes.size() * 4);
        for (const auto& o : dist.outcomes)
            for (const auto& f : factors)
                next.push_back({o.probability * f.prob, o.sign * f.sign,
                                f.keep_z ? (o.z_mask | bit) : o.z_mask});
        dist.outcomes = std::move(next);
    }
    return dist;
}

// E over flips of the noisy {I,Z} string, expanded in noise-free operators:
// sum over subsets of the Z support with per-qubit weights gamma(Z) = 1-p0-p1
// (Z kept) and gamma(1) = p1-p0 (Z replaced by identity).
inline PauliTermSum expected_noisy_operator(const PauliString& p, const ReadoutModel& model) {
    if (!p.diagonal()) throw std::invalid_argument("operator must be over {I,Z}; pre-rotate first");
    if (p.size() != model.n_qubits()) throw std::invalid_argument("operator/model size mismatch");
    const std::vector<int> support = p.support();
    if (support.size() > 20) throw std::invalid_argument("support too large");

    PauliTermSum sum;
    sum.n_qubits = p.size();
    const std::uint64_t n_sub = std::uint64_t{1} << support.size();
    for (std::uint64_t sub = 0; sub < n_sub; ++sub) {
        double coeff = 1.0;
        std::uint64_t zmask = 0;
        for (size_t i = 0; i < support.size(); ++i) {
            const int q = support[i];
            if (sub >> i & 1) {
                coeff *= model.gamma_z(q);
                zmask |= std::uint64_t{1} << (q - 1);
            } else {
                coeff *= model.gamma_i(q);
            }
        }
        sum.terms.push_back({coeff, PauliString::from_z_mask(p.size(), zmask)});
    }
    return sum;
}

// Exponential T1 relaxation: |1> decays with survival p(t) = exp(-t/T1), so a
// measured Z behaves as p(t) Z + (1 - p(t)) 1.
struct RelaxationModel {
    double t1 = 1.0;
    double t = 0.0;

    double survival() const {
        if (t1 <= 0.0) throw std::invalid_argument("T1 must be positive");
        if (t < 0.0) throw std::invalid_argument("t must be nonnegative");
        return std::exp(-t / t1);
    }
};

inline double t1_noisy_expectation(double z_value, const RelaxationModel& model) {
    const double p = model.survival();
    return p * z_value + (1.0 - p);
}

inline double t1_correct(double noisy, const RelaxationModel& model) {
    const double p = model.survival();
    if (p <= 0.0) throw std::domain_error("T1 channel not invertible: survival probability is 0");
    return (noisy - (1.0 - p)) / p;
}

// Synthetic version of the hardware calibration runs: estimate p_{q,0} from
// measuring |0>, and p_{q,1} from measuring X|0>, s_cal shots per round,
// averaged by plain mean over rounds.
struct CalibrationRecord {
    struct QubitEstimate {
        double p0 = 0.0;
        double p1 = 0.0;
        std::vector<double> raw_p0; // per-round estimates
        std::vector<double> raw_p1;
    };
    long s_cal = 0;
    int rounds = 0;
    std::vector<QubitEstimate> qubits;

    ReadoutModel estimated_model() const {
        std::vector<QubitFlips> flips;
        for (const auto& q : qubits) flips.push_back({q.p0, q.p1});
        return ReadoutModel(std::move(flips));
    }
};

inline void to_json(nlohmann::json& j, const CalibrationRecord& r) {
    j = nlohmann::json{{"s_cal", r.s_cal}, {"rounds", r.rounds}, {"qubits", nlohmann::json::array()}};
    for (const auto& q : r.qubits)
        j["qubits"].push_back(
            {{"p0", q.p0}, {"p1", q.p1}, {"raw_p0", q.raw_p0}, {"raw_p1", q.raw_p1}});
}

inline void from_json(const nlohmann::json& j, CalibrationRecord& r) {
    r.s_cal = j.at("s_cal").get<long>();
    r.rounds = j.at("rounds").get<int>();
    r.qubits.clear();
    for (const auto& q : j.at("qubits")) {
        CalibrationRecord::QubitEstimate e;
        e.p0 = q.at("p0").get<double>();
        e.p1 = q.at("p1").get<double>();
        if (q.contains("raw_p0")) e.raw_p0 = q.at("raw_p0").get<std::vector<double>>();
        if (q.contains("raw_p1")) e.raw_p1 = q.at("raw_p1").get<std::vector<double>>();
        r.qubits.push_back(std::move(e));
    }
}

inline CalibrationRecord simulate_calibration(const ReadoutModel& true_model, long s_cal,
                                              int rounds, std::uint64_t seed) {
    if (s_cal < 1) throw std::invalid_argument("s_cal must be >= 1");
    if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    Rng master(seed);
    CalibrationRecord rec;
    rec.s_cal = s_cal;
    rec.rounds = rounds;
    for (int q = 1; q <= true_model.n_qubits(); ++q) {
        Rng rng = master.split(static_cast<std::uint64_t>(q));
        CalibrationRecord::QubitEstimate est;
        for (int r = 0; r < rounds; ++r) {
            long ones = 0, zeros = 0;
            for (long s = 0; s < s_cal; ++s)
                if (rng.bernoulli(true_model.p0(q))) ++ones; // |0> misread as 1
            for (long s = 0; s < s_cal; ++s)
                if (rng.bernoulli(true_model.p1(q))) ++zeros; // |1> misread as 0
            est.raw_p0.push_back(static_cast<double>(ones) / static_cast<double>(s_cal));
            est.raw_p1.push_back(static_cast<double>(zeros) / static_cast<double>(s_cal));
        }
        for (double v : est.raw_p0) est.p0 += v;
        for (double v : est.raw_p1) est.p1 += v;
        est.p0 /= rounds;
        est.p1 /= rounds;
        rec.qubits.push_back(std::move(est));
    }
    return rec;
}

} // namespace qem
