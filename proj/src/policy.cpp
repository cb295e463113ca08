#include "east/policy.hpp"

#include "east/action_parser.hpp"
#include "east/error.hpp"
#include "east/rng.hpp"

#include <cmath>
#include <numeric>

namespace east {

double entropy_from_counts(std::span<const size_t> counts) {
    const size_t n = std::accumulate(counts.begin(), counts.end(), size_t{0});
    if (n == 0) {
        return 0.0;
    }
    double h = 0.0;
    for (size_t c : counts) {
        if (c > 0) {
            const double p = static_cast<double>(c) / static_cast<double>(n);
            h -= p * std::log(p);
        }
    }
    return h;
}

action_distribution distribution_from_counts(std::vector<size_t> counts, size_t n_total) {
    action_distribution d;
    d.n_valid = std::accumulate(counts.begin(), counts.end(), size_t{0});
    d.n_total = n_total;
    if (d.n_valid > n_total) {
        throw error(errc::bad_request, "distribution: more valid actions than completions");
    }
    if (d.n_valid > 0) {
        d.probs.reserve(counts.size());
        for (size_t c : counts) {
            d.probs.push_back(static_cast<double>(c) / static_cast<double>(d.n_valid));
        }
        d.entropy_nats = entropy_from_counts(counts);
    }
    d.counts = std::move(counts);
    return d;
}

double valid_fraction(const action_distribution & dist) {
    if (dist.n_total == 0) {
        throw error(errc::bad_request, "valid_fraction: no completions");
    }
    return static_cast<double>(dist.n_valid) / static_cast<double>(dist.n_total);
}

policy_sample sample_policy(const backend & model, const transcript & t, const sampling_params & params,
                            const std::optional<steering_spec> & steering, size_t m, size_t n_arms) {
    if (m < 1) {
        throw error(errc::invalid_config, "estimate_distribution: m must be >= 1");
    }
    policy_sample out;
    for (auto & g : model.generate_n(t, params, steering, m)) {
        out.completions.push_back(std::move(g.text));
    }
    auto parsed = parse_batch(out.completions, t.scenario, n_arms);
    std::vector<size_t> counts(n_arms, 0);
    for (size_t arm : parsed.valid_actions) {
        ++counts[arm];
    }
    out.dist = distribution_from_counts(std::move(counts), m);
    out.parsed = std::move(parsed.per_completion);
    return out;
}

action_distribution estimate_distribution(const backend & model, const transcript & t, const sampling_params & params,
                                          const std::optional<steering_spec> & steering, size_t m, size_t n_arms) {
    return sample_policy(model, t, params, steering, m, n_arms).dist;
}

namespace {

// arm of the r-th valid action in count order, and its rank within that arm
std::pair<size_t, size_t> locate(const action_distribution & dist, uint64_t seed) {
    if (dist.all_invalid()) {
        throw error(errc::all_invalid, "select_action: no valid completions");
    }
    rng r(seed);
    size_t k = static_cast<size_t>(r.below(dist.n_valid));
    for (size_t arm = 0; arm < dist.counts.size(); ++arm) {
        if (k < dist.counts[arm]) {
            return {arm, k};
        }
        k -= dist.counts[arm];
    }
    throw error(errc::bad_request, "select_action: inconsistent counts");
}

} // namespace

size_t select_action(const action_distribution & dist, uint64_t seed) {
    return locate(dist, seed).first;
}

selection select_completion(const policy_sample & sample, uint64_t seed) {
    const auto [arm, rank] = locate(sample.dist, seed);
    size_t seen = 0;
    for (size_t i = 0; i < sample.parsed.size(); ++i) {
        if (sample.parsed[i] == arm) {
            if (seen == rank) {
                return {arm, i};
            }
            ++seen;
        }
    }
    throw error(errc::bad_request, "select_completion: counts do not match parsed completions");
}

} // namespace east
