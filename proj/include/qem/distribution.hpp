#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qem/rng.hpp"
#include "qem/state.hpp"

namespace qem {

enum class WeightKind { counts, probability };

// Weights over the 2^N computational-basis bit strings, either integer shot
// counts or probabilities.  Stored dense; basis index convention matches
// StateVector (qubit 1 = least-significant bit).
class BitstringDistribution {
  public:
    BitstringDistribution(int n_qubits, WeightKind kind)
        : n_qubits_(n_qubits), kind_(kind), weights_(std::uint64_t{1} << n_qubits, 0.0) {
        if (n_qubits < 1 || n_qubits > kMaxQubits)
            throw std::invalid_argument("n_qubits must be in 1..20");
    }

    int n_qubits() const { return n_qubits_; }
    WeightKind kind() const { return kind_; }
    std::uint64_t dim() const { return weights_.size(); }

    double& operator[](std::uint64_t i) { return weights_[i]; }
    double operator[](std::uint64_t i) const { return weights_[i]; }
    const std::vector<double>& weights() const { return weights_; }

    double total() const {
        double t = 0.0;
        for (double w : weights_) t += w;
        return t;
    }

    // Probability-kind copy with weights scaled to sum to 1.
    BitstringDistribution normalized() const {
        const double t = total();
        if (t <= 0.0) throw std::domain_error("cannot normalize empty distribution");
        BitstringDistribution p(n_qubits_, WeightKind::probability);
        for (std::uint64_t i = 0; i < dim(); ++i) p[i] = weights_[i] / t;
        return p;
    }

    // Expectation of the diagonal Z string with the given support mask.
    double z_expectation(std::uint64_t zmask) const {
        double acc = 0.0, t = 0.0;
        for (std::uint64_t i = 0; i < dim(); ++i) {
            acc += (std::popcount(i & zmask) & 1) ? -weights_[i] : weights_[i];
            t += weights_[i];
        }
        if (t <= 0.0) throw std::domain_error("empty distribution");
        return acc / t;
    }

  private:
    int n_qubits_;
    WeightKind kind_;
    std::vector<double> weights_;
};

inline std::string bitstring_label(std::uint64_t index, int n_qubits) {
    std::string s(static_cast<size_t>(n_qubits), '0');
    for (int q = 1; q <= n_qubits; ++q)
        if (index >> (q - 1) & 1) s[static_cast<size_t>(n_qubits - q)] = '1';
    return s;
}

inline std::uint64_t bitstring_index(const std::string& label) {
    std::uint64_t i = 0;
    for (char c : label) {
        if (c != '0' && c != '1') throw std::invalid_argument("invalid bit string: " + label);
        i = (i << 1) | static_cast<std::uint64_t>(c == '1');
    }
    return i;
}

inline void to_json(nlohmann::json& j, const BitstringDistribution& d) {
    j = nlohmann::json{{"n_qubits", d.n_qubits()}};
    nlohmann::json entries = nlohmann::json::object();
    for (std::uint64_t i = 0; i < d.dim(); ++i) {
        if (d[i] == 0.0) continue;
        const std::string key = bitstring_label(i, d.n_qubits());
        if (d.kind() == WeightKind::counts)
            entries[key] = static_cast<std::int64_t>(std::llround(d[i]));
        else
            entries[key] = d[i];
    }
    j[d.kind() == WeightKind::counts ? "counts" : "probabilities"] = entries;
}

inline void from_json(const nlohmann::json& j, BitstringDistribution& d) {
    const int n = j.at("n_qubits").get<int>();
    const bool counts = j.contains("counts");
    d = BitstringDistribution(n, counts ? WeightKind::counts : WeightKind::probability);
    const auto& entries = counts ? j.at("counts") : j.at("probabilities");
    for (auto it = entries.begin(); it != entries.end(); ++it) {
        const std::uint64_t idx = bitstring_index(it.key());
        if (idx >= d.dim()) throw std::invalid_argument("bit string longer than register");
        d[idx] = it.value().get<double>();
    }
}

// Projective sampling of `shots` bit strings from |psi>; deterministic for a
// fixed generator state.
inline BitstringDistribution sample_bitstrings(const StateVector& state, long shots, Rng& rng) {
    if (shots < 1) throw std::invalid_argument("shots must be >= 1");
    const std::vector<double> probs = state.probabilities();
    std::vector<double> cdf(probs.size());
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        cdf[i] = acc;
    }
    BitstringDistribution counts(state.n_qubits(), WeightKind::counts);
    for (long s = 0; s < shots; ++s) {
        const double u = rng.next_double() * acc;
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        std::uint64_t idx = static_cast<std::uint64_t>(it - cdf.begin());
        if (idx >= counts.dim()) idx = counts.dim() - 1;
        counts[idx] += 1.0;
    }
    return counts;
}

inline BitstringDistribution sample_bitstrings(const StateVector& state, long shots,
                                               std::uint64_t seed) {
    Rng rng(seed);
    return sample_bitstrings(state, shots, rng);
}

} // namespace qem
