#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>

namespace subsel {

/// Which guarantee the parameters are sized for.
struct ParamMode {
    enum class Kind { l2, l2_outlier, lp };
    Kind kind = Kind::l2;
    double lambda = 1.0; // l2_outlier only
    double p = 2.0;      // lp only

    static ParamMode l2() { return {}; }
    static ParamMode l2_outlier(double lambda) { return {Kind::l2_outlier, lambda, 2.0}; }
    static ParamMode lp(double p) { return {Kind::lp, 1.0, p}; }
};

struct DerivedParams {
    std::size_t t = 1; // points per round
    std::size_t l = 1; // rounds
    std::size_t m = 1; // random-walk length (proposals per chain, including the start)
    double eps1 = 0.5;
    double eps2 = 0.5;
    double alpha = 1.0;           // approximation factor of the initial subset
    double alpha_effective = 1.0; // alpha after the mode's scaling

    friend bool operator==(const DerivedParams&, const DerivedParams&) = default;
};

struct ParamOverrides {
    std::optional<std::size_t> t, l, m;
};

namespace detail {
// Ceiling that ignores floating-point noise just above an integer.
inline std::size_t ceil_count(double x) {
    const double c = std::ceil(x * (1.0 - 1e-12));
    return c < 1.0 ? std::size_t{1} : static_cast<std::size_t>(c);
}
} // namespace detail

/// Walk length after which a chain started from q is within eps2 of the
/// adaptive distribution whenever the current error exceeds eps1 times the
/// pivot error: ceil(1 + (2/eps2) ln(1/eps1)).
inline std::size_t walk_length(double eps1, double eps2) {
    if (!(eps1 > 0.0 && eps1 < 1.0 && eps2 > 0.0 && eps2 < 1.0))
        throw std::invalid_argument("walk_length: need eps1, eps2 in (0, 1)");
    return detail::ceil_count(1.0 + (2.0 / eps2) * std::log(1.0 / eps1));
}

/// Parameters t, l, m and the split tolerances for target dimension k,
/// accuracy epsilon and an alpha-approximate initial subset.
///
///   t    = ceil(8k / eps)
///   l    = max(1, ceil(ln(2 a (k+1) / eps) / ln(8 / eps)))
///   eps1 = eps / (8 a (k+1))
///   eps2 = eps / (8 t l a (k+1))
///   m    = walk_length(eps1, eps2)
///
/// where a is alpha for l2, alpha / lambda with outliers, and
/// alpha (k+1)^(p-1) for lp so that a (k+1) is the lp initialization factor.
inline DerivedParams derive_params(std::size_t k, double epsilon, double alpha, ParamMode mode = ParamMode::l2()) {
    if (k < 1) throw std::invalid_argument("derive_params: need k >= 1");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("derive_params: need epsilon in (0, 1)");
    if (!(alpha >= 1.0) || !std::isfinite(alpha)) throw std::invalid_argument("derive_params: need alpha >= 1");

    const double kk = static_cast<double>(k);
    double a = alpha;
    switch (mode.kind) {
    case ParamMode::Kind::l2:
        break;
    case ParamMode::Kind::l2_outlier:
        if (!(mode.lambda > 0.0 && mode.lambda <= 1.0))
            throw std::invalid_argument("derive_params: need lambda in (0, 1]");
        a = alpha / mode.lambda;
        break;
    case ParamMode::Kind::lp:
        if (!(mode.p >= 2.0) || !std::isfinite(mode.p)) throw std::invalid_argument("derive_params: need p >= 2");
        a = alpha * std::pow(kk + 1.0, mode.p - 1.0);
        break;
    }

    DerivedParams out;
    out.alpha = alpha;
    out.alpha_effective = a;
    out.t = detail::ceil_count(8.0 * kk / epsilon);
    out.l = std::max<std::size_t>(1, detail::ceil_count(std::log(2.0 * a * (kk + 1.0) / epsilon) /
                                                        std::log(8.0 / epsilon)));
    out.eps1 = epsilon / (8.0 * a * (kk + 1.0));
    out.eps2 = epsilon / (8.0 * static_cast<double>(out.t) * static_cast<double>(out.l) * a * (kk + 1.0));
    out.m = walk_length(out.eps1, out.eps2);
    return out;
}

inline DerivedParams with_overrides(DerivedParams params, const ParamOverrides& o) {
    if (o.t) params.t = *o.t;
    if (o.l) params.l = *o.l;
    if (o.m) params.m = *o.m;
    if (params.t < 1 || params.m < 1) throw std::invalid_argument("overrides: t and m must be >= 1");
    return params;
}

} // namespace subsel
