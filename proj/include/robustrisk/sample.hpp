#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "robustrisk/error.hpp"
#include "robustrisk/numeric.hpp"

namespace robustrisk {

/// Terminal losses under the nominal model: either an equally weighted Monte
/// Carlo sample, or a finite set of (value, probability) atoms whose
/// expectations are exact.
class LossSample {
  public:
    static LossSample monte_carlo(std::vector<double> values) {
        LossSample s;
        s.values_ = std::move(values);
        s.validate();
        return s;
    }

    static LossSample atoms(std::vector<double> values, std::vector<double> probs) {
        if (probs.size() != values.size())
            throw ArgumentError("LossSample::atoms: values and probs differ in length");
        for (double p : probs)
            if (!(p >= 0.0) || !std::isfinite(p))
                throw ArgumentError("LossSample::atoms: probabilities must be nonnegative");
        const double total = pairwise_sum(probs);
        if (std::abs(total - 1.0) > 1e-12)
            throw ArgumentError("LossSample::atoms: probabilities must sum to 1");
        LossSample s;
        s.values_ = std::move(values);
        s.probs_ = std::move(probs);
        s.validate();
        return s;
    }

    std::span<const double> values() const noexcept { return values_; }
    /// Empty for Monte Carlo samples (uniform weights).
    std::span<const double> probs() const noexcept { return probs_; }
    bool is_atomic() const noexcept { return !probs_.empty(); }
    std::size_t size() const noexcept { return values_.size(); }

    double mean() const { return expectation(values_, probs_); }
    double min() const { return *std::min_element(values_.begin(), values_.end()); }
    double max() const { return *std::max_element(values_.begin(), values_.end()); }

    /// E[x] for a per-sample quantity aligned with values().
    double expect(std::span<const double> x) const { return expectation(x, probs_); }

    /// The same sample with every loss shifted by `s`.
    LossSample shifted(double s) const {
        LossSample out = *this;
        for (double& v : out.values_)
            v += s;
        return out;
    }

  private:
    void validate() const {
        if (values_.empty())
            throw ArgumentError("LossSample: empty sample");
        if (!all_finite(values_))
            throw ArgumentError("LossSample: non-finite loss value");
    }

    std::vector<double> values_;
    std::vector<double> probs_;
};

} // namespace robustrisk
