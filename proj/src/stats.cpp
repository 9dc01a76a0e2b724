#include "gpupower/stats.hpp"

#include <limits>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "gpupower/domain.hpp"

namespace gpupower {

void Matrix::append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw InvalidInput("row width does not match matrix columns");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

double percentile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw InvalidInput("percentile of an empty sequence");
    if (!(p >= 0.0 && p <= 100.0)) throw InvalidInput("percentile rank must be in [0,100]");
    const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0) return sorted[lo];
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double percentile(std::span<const double> values, double p) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    return percentile_sorted(sorted, p);
}

double mean(std::span<const double> values) {
    if (values.empty()) throw InvalidInput("mean of an empty sequence");
    long double sum = 0.0L;
    for (double v : values) sum += v;
    return static_cast<double>(sum / static_cast<long double>(values.size()));
}

double stddev(std::span<const double> values) {
    const double m = mean(values);
    long double ss = 0.0L;
    for (double v : values) {
        const long double d = static_cast<long double>(v) - m;
        ss += d * d;
    }
    return static_cast<double>(std::sqrt(ss / static_cast<long double>(values.size())));
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw InvalidInput("uniform_int: empty range");
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
}

double Rng::normal(double mean, double sd) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + sd * z;
}

std::size_t Rng::weighted_index(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw InvalidInput("weighted_index: weights must have positive sum");
    double r = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (r < weights[i]) return i;
        r -= weights[i];
    }
    return weights.size() - 1;
}

}  // namespace gpupower
