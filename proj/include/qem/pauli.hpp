#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace qem {

enum class Pauli : unsigned char { I, X, Y, Z };

inline char pauli_char(Pauli p) {
    switch (p) {
        case Pauli::I: return 'I';
        case Pauli::X: return 'X';
        case Pauli::Y: return 'Y';
        case Pauli::Z: return 'Z';
    }
    return '?';
}

inline Pauli pauli_from_char(char c) {
    switch (c) {
        case 'I': return Pauli::I;
        case 'X': return Pauli::X;
        case 'Y': return Pauli::Y;
        case 'Z': return Pauli::Z;
    }
    throw std::invalid_argument(std::string("invalid Pauli letter: ") + c);
}

// Tensor product of single-qubit Paulis.  letters[q-1] acts on qubit q, and
// qubit 1 is the least-significant bit of a basis index (index 5 on four
// qubits is the bit string 0101 with qubit 1 = 1).
class PauliString {
  public:
    PauliString() = default;
    explicit PauliString(std::vector<Pauli> letters) : letters_(std::move(letters)) {}

    static PauliString identity(int n_qubits) {
        return PauliString(std::vector<Pauli>(static_cast<size_t>(n_qubits), Pauli::I));
    }

    // Single Z_q on an n-qubit register.
    static PauliString single_z(int n_qubits, int qubit) {
        PauliString p = identity(n_qubits);
        p.set(qubit, Pauli::Z);
        return p;
    }

    // Z on every qubit of `mask` (bit q-1 set means Z on qubit q).
    static PauliString from_z_mask(int n_qubits, std::uint64_t mask) {
        PauliString p = identity(n_qubits);
        for (int q = 1; q <= n_qubits; ++q)
            if (mask >> (q - 1) & 1) p.set(q, Pauli::Z);
        return p;
    }

    // Labels are written qubit-N .. qubit-1 left to right, e.g. "ZZII".
    static PauliString from_label(std::string_view label) {
        std::vector<Pauli> letters(label.size());
        for (size_t i = 0; i < label.size(); ++i)
            letters[label.size() - 1 - i] = pauli_from_char(label[i]);
        return PauliString(std::move(letters));
    }

    std::string label() const {
        std::string s(letters_.size(), 'I');
        for (size_t i = 0; i < letters_.size(); ++i)
            s[letters_.size() - 1 - i] = pauli_char(letters_[i]);
        return s;
    }

    int size() const { return static_cast<int>(letters_.size()); }

    Pauli at(int qubit) const { return letters_.at(static_cast<size_t>(qubit - 1)); }
    void set(int qubit, Pauli p) { letters_.at(static_cast<size_t>(qubit - 1)) = p; }

    const std::vector<Pauli>& letters() const { return letters_; }

    std::uint64_t mask_of(Pauli p) const {
        std::uint64_t m = 0;
        for (size_t i = 0; i < letters_.size(); ++i)
            if (letters_[i] == p) m |= std::uint64_t{1} << i;
        return m;
    }

    std::uint64_t support_mask() const {
        std::uint64_t m = 0;
        for (size_t i = 0; i < letters_.size(); ++i)
            if (letters_[i] != Pauli::I) m |= std::uint64_t{1} << i;
        return m;
    }

    // Ascending 1-based qubit indices of the non-identity letters.
    std::vector<int> support() const {
        std::vector<int> s;
        for (size_t i = 0; i < letters_.size(); ++i)
            if (letters_[i] != Pauli::I) s.push_back(static_cast<int>(i) + 1);
        return s;
    }

    int support_size() const { return static_cast<int>(support().size()); }

    bool diagonal() const {
        for (Pauli p : letters_)
            if (p == Pauli::X || p == Pauli::Y) return false;
        return true;
    }

    bool operator==(const PauliString& other) const { return letters_ == other.letters_; }

  private:
    std::vector<Pauli> letters_;
};

struct PauliTerm {
    double coeff = 0.0;
    PauliString string;
};

// Weighted sum of Pauli strings; Hermitian by construction (real coefficients).
// Terms with X/Y letters stand for already-rotated measurement frames: the
// {I,Z} skeleton of a term is what gets measured after its post-rotation.
struct PauliTermSum {
    int n_qubits = 0;
    std::vector<PauliTerm> terms;

    double coeff_l1() const {
        double a = 0.0;
        for (const auto& t : terms) a += t.coeff < 0 ? -t.coeff : t.coeff;
        return a;
    }
};

inline void to_json(nlohmann::json& j, const PauliTermSum& h) {
    j = nlohmann::json{{"n_qubits", h.n_qubits}, {"terms", nlohmann::json::array()}};
    for (const auto& t : h.terms)
        j["terms"].push_back({{"coeff", t.coeff}, {"pauli", t.string.label()}});
}

inline void from_json(const nlohmann::json& j, PauliTermSum& h) {
    h.n_qubits = j.at("n_qubits").get<int>();
    h.terms.clear();
    for (const auto& jt : j.at("terms")) {
        PauliTerm t;
        t.coeff = jt.at("coeff").get<double>();
        t.string = PauliString::from_label(jt.at("pauli").get<std::string>());
        if (t.string.size() != h.n_qubits)
            throw std::invalid_argument("pauli label length does not match n_qubits");
        h.terms.push_back(std::move(t));
    }
}

} // namespace qem
