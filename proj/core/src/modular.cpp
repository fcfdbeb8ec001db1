#include "dflow/modular.hpp"

#include <numeric>

namespace dflow {

namespace {

void check_length(std::span<const double> v, Modulus K, const char* what) {
    if (static_cast<int>(v.size()) != K.value()) {
        throw LengthMismatch(std::string(what) + ": operand length " +
                             std::to_string(v.size()) + " != K " +
                             std::to_string(K.value()));
    }
}

void check_scale_mass(std::span<const double> s, Modulus K, const SigmaMask* mask,
                      const char* what) {
    SigmaMask fallback;
    if (!mask) {
        fallback = coprime_mask(K);
        mask = &fallback;
    }
    double bad = 0.0;
    for (int j = 0; j < K.value(); ++j) {
        if (!mask->allowed[j]) bad += s[j];
    }
    if (bad > kSigmaMassTolerance) {
        throw NonInvertibleScale(std::string(what) + ": scale has mass " +
                                 std::to_string(bad) + " on non-invertible indices");
    }
}

} // namespace

int mod_inverse(int s, Modulus K) {
    const int k = K.value();
    if (s <= 0 || s >= k || std::gcd(s, k) != 1) {
        throw NonInvertibleScale("mod_inverse: gcd(" + std::to_string(s) + ", " +
                                 std::to_string(k) + ") != 1");
    }
    // Extended Euclid on (s, k); only the coefficient of s is tracked.
    int64_t r0 = s, r1 = k;
    int64_t t0 = 1, t1 = 0;
    while (r1 != 0) {
        const int64_t q = r0 / r1;
        int64_t tmp = r0 - q * r1;
        r0 = r1;
        r1 = tmp;
        tmp = t0 - q * t1;
        t0 = t1;
        t1 = tmp;
    }
    int64_t inv = t0 % k;
    if (inv < 0) inv += k;
    return static_cast<int>(inv);
}

SigmaMask coprime_mask(Modulus K) {
    const int k = K.value();
    SigmaMask mask;
    mask.allowed.resize(k);
    for (int s = 0; s < k; ++s) {
        mask.allowed[s] = (s != 0) && std::gcd(s, k) == 1;
    }
    return mask;
}

void one_hot_add(std::span<const double> a, std::span<const double> b,
                 std::span<double> out, Modulus K) {
    const int k = K.value();
    check_length(a, K, "one_hot_add");
    check_length(b, K, "one_hot_add");
    for (int c = 0; c < k; ++c) {
        double acc = 0.0;
        for (int i = 0; i < k; ++i) {
            int j = c - i;
            if (j < 0) j += k;
            acc += a[i] * b[j];
        }
        out[c] = acc;
    }
}

void one_hot_sub(std::span<const double> a, std::span<const double> b,
                 std::span<double> out, Modulus K) {
    const int k = K.value();
    check_length(a, K, "one_hot_sub");
    check_length(b, K, "one_hot_sub");
    for (int c = 0; c < k; ++c) {
        double acc = 0.0;
        for (int j = 0; j < k; ++j) {
            int i = c + j;
            if (i >= k) i -= k;
            acc += b[j] * a[i];
        }
        out[c] = acc;
    }
}

void one_hot_mul(std::span<const double> s, std::span<const double> a,
                 std::span<double> out, Modulus K, const SigmaMask* mask) {
    const int k = K.value();
    check_length(s, K, "one_hot_mul");
    check_length(a, K, "one_hot_mul");
    check_scale_mass(s, K, mask, "one_hot_mul");
    for (int c = 0; c < k; ++c) out[c] = 0.0;
    for (int j = 0; j < k; ++j) {
        if (s[j] == 0.0) continue;
        for (int i = 0; i < k; ++i) {
            out[(j * i) % k] += s[j] * a[i];
        }
    }
}

void one_hot_div(std::span<const double> s, std::span<const double> a,
                 std::span<double> out, Modulus K, const SigmaMask* mask) {
    const int k = K.value();
    check_length(s, K, "one_hot_div");
    check_length(a, K, "one_hot_div");
    check_scale_mass(s, K, mask, "one_hot_div");
    for (int c = 0; c < k; ++c) {
        double acc = 0.0;
        for (int j = 0; j < k; ++j) {
            acc += s[j] * a[(j * c) % k];
        }
        out[c] = acc;
    }
}

std::vector<double> one_hot_add(std::span<const double> a, std::span<const double> b, Modulus K) {
    std::vector<double> out(K.value());
    one_hot_add(a, b, out, K);
    return out;
}

std::vector<double> one_hot_sub(std::span<const double> a, std::span<const double> b, Modulus K) {
    std::vector<double> out(K.value());
    one_hot_sub(a, b, out, K);
    return out;
}

std::vector<double> one_hot_mul(std::span<const double> s, std::span<const double> a, Modulus K) {
    std::vector<double> out(K.value());
    one_hot_mul(s, a, out, K);
    return out;
}

std::vector<double> one_hot_div(std::span<const double> s, std::span<const double> a, Modulus K) {
    std::vector<double> out(K.value());
    one_hot_div(s, a, out, K);
    return out;
}

std::vector<double> hard_one_hot(int i, Modulus K) {
    std::vector<double> v(K.value(), 0.0);
    v.at(i) = 1.0;
    return v;
}

int hard_index(std::span<const double> v, double tol) {
    int idx = -1;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (std::abs(v[i] - 1.0) <= tol) {
            if (idx >= 0) return -1;
            idx = static_cast<int>(i);
        } else if (std::abs(v[i]) > tol) {
            return -1;
        }
    }
    return idx;
}

} // namespace dflow
