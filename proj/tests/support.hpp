#pragma once

// Independent oracles and fixtures shared by the unit and acceptance tests.
// Nothing here calls the library code it is used to check.

#include "east/rng.hpp"
#include "east/steering.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testing_support {

inline std::filesystem::path temp_dir(const std::string & name) {
    auto p = std::filesystem::temp_directory_path() / ("east_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string slurp(const std::filesystem::path & p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

// Steering vector by direct summation in long double, runs and timesteps in order.
inline std::vector<long double> steering_oracle(const east::activation_dataset & ds) {
    const size_t d = ds.runs.front().samples.front().activation.size();
    std::vector<long double> u(d, 0.0L);
    long double Z = 0.0L;
    for (const auto & run : ds.runs) {
        const long double T = static_cast<long double>(run.samples.size());
        std::vector<long double> mean(d, 0.0L);
        for (const auto & s : run.samples) {
            for (size_t i = 0; i < d; ++i) {
                mean[i] += static_cast<long double>(s.activation[i]);
            }
        }
        for (auto & m : mean) {
            m /= T;
        }
        for (const auto & s : run.samples) {
            const long double h = static_cast<long double>(s.entropy_nats);
            Z += h;
            for (size_t i = 0; i < d; ++i) {
                u[i] += h * (static_cast<long double>(s.activation[i]) - mean[i]);
            }
        }
    }
    for (auto & x : u) {
        x /= Z;
    }
    return u;
}

// Random dataset; activations are small-ish floats, entropies in [0, ln 2].
inline east::activation_dataset random_dataset(std::mt19937_64 & gen, size_t max_k, size_t max_t, size_t max_d) {
    std::uniform_int_distribution<size_t> K(1, max_k), T(1, max_t), D(1, max_d);
    std::uniform_real_distribution<float> z(-3.0f, 3.0f);
    std::uniform_real_distribution<double> h(0.0, std::log(2.0));
    east::activation_dataset ds;
    const size_t d = D(gen);
    const size_t k = K(gen);
    for (size_t r = 0; r < k; ++r) {
        east::activation_run run;
        const size_t t = T(gen);
        for (size_t s = 0; s < t; ++s) {
            east::activation_sample a;
            a.activation.resize(d);
            for (auto & x : a.activation) {
                x = z(gen);
            }
            a.entropy_nats = h(gen);
            run.samples.push_back(std::move(a));
        }
        ds.runs.push_back(std::move(run));
    }
    // keep Z > 0
    ds.runs.front().samples.front().entropy_nats += 0.1;
    return ds;
}

// Binary plug-in entropy of x successes out of m, nats.
inline double h2(int x, int m) {
    const double p = static_cast<double>(x) / m;
    double h = 0.0;
    if (p > 0.0) {
        h -= p * std::log(p);
    }
    if (p < 1.0) {
        h -= (1.0 - p) * std::log(1.0 - p);
    }
    return h;
}

struct moments {
    double mean = 0.0;
    double var = 0.0;
};

// Exact mean and variance of h2(X, m) for X ~ Binomial(m, p).
inline moments plugin_entropy_moments(double p, int m) {
    moments out;
    double second = 0.0;
    for (int x = 0; x <= m; ++x) {
        const double logc = std::lgamma(m + 1.0) - std::lgamma(x + 1.0) - std::lgamma(m - x + 1.0);
        double lp = logc;
        lp += x > 0 ? x * std::log(p) : 0.0;
        lp += m - x > 0 ? (m - x) * std::log1p(-p) : 0.0;
        const double w = (x > 0 && p == 0.0) || (x < m && p == 1.0) ? 0.0 : std::exp(lp);
        const double h = h2(x, m);
        out.mean += w * h;
        second += w * h * h;
    }
    out.var = std::max(0.0, second - out.mean * out.mean);
    return out;
}

// e minus its projection on v: the part of e a feature shuffle of v cannot reach
inline std::vector<double> orthogonal_part(const std::vector<double> & e, const std::vector<float> & v) {
    long double ev = 0.0L, vv = 0.0L;
    for (size_t i = 0; i < e.size(); ++i) {
        ev += static_cast<long double>(e[i]) * v[i];
        vv += static_cast<long double>(v[i]) * v[i];
    }
    std::vector<double> out(e.size());
    for (size_t i = 0; i < e.size(); ++i) {
        out[i] = static_cast<double>(e[i] - ev / vv * v[i]);
    }
    return out;
}

inline double logistic(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

} // namespace testing_support
