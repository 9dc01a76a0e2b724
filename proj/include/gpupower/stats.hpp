#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace gpupower {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    void append_row(std::span<const double> values);

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Percentile by linear interpolation between order statistics (p in [0,100]).
double percentile(std::span<const double> values, double p);

/// Same as percentile, for input already sorted ascending.
double percentile_sorted(std::span<const double> sorted, double p);

double mean(std::span<const double> values);

/// Population (ddof = 0) standard deviation.
double stddev(std::span<const double> values);

/// Portable deterministic random source: mt19937_64 raw output, 53-bit
/// uniforms, Box-Muller normals. Unlike std::*_distribution, every draw is
/// fully specified and reproducible across standard libraries.
class Rng {
public:
    static constexpr const char* kAlgorithm = "mt19937_64/uniform53/box-muller";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform();  // [0, 1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // inclusive
    double normal(double mean = 0.0, double sd = 1.0);
    bool bernoulli(double p) { return uniform() < p; }
    /// Index drawn with probability proportional to weights.
    std::size_t weighted_index(std::span<const double> weights);

private:
    std::mt19937_64 engine_;
};

}  // namespace gpupower
