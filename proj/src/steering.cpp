#include "east/steering.hpp"

#include "binary_io.hpp"
#include "east/error.hpp"
#include "east/hash.hpp"
#include "east/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>

namespace east {

size_t activation_dataset::dim() const {
    for (const auto & r : runs) {
        if (!r.samples.empty()) {
            return r.samples.front().activation.size();
        }
    }
    return 0;
}

size_t activation_dataset::n_samples() const {
    size_t n = 0;
    for (const auto & r : runs) {
        n += r.samples.size();
    }
    return n;
}

void activation_dataset::validate() const {
    if (runs.empty()) {
        throw error(errc::empty_dataset, "activation dataset has no runs");
    }
    const size_t d = dim();
    if (d == 0) {
        throw error(errc::empty_dataset, "activation dataset has no activations");
    }
    for (const auto & r : runs) {
        if (r.samples.empty()) {
            throw error(errc::empty_dataset, "activation dataset contains an empty run");
        }
        for (const auto & s : r.samples) {
            if (s.activation.size() != d) {
                throw error(errc::dim_mismatch, "activation dataset mixes dimensions");
            }
            if (!(s.entropy_nats >= 0.0) || !std::isfinite(s.entropy_nats)) {
                throw error(errc::bad_request, "activation dataset: entropy must be finite and >= 0");
            }
            for (float v : s.activation) {
                if (!std::isfinite(v)) {
                    throw error(errc::bad_request, "activation dataset: non-finite activation");
                }
            }
        }
    }
}

std::string activation_dataset::hash() const {
    std::ostringstream os;
    detail::put<uint32_t>(os, static_cast<uint32_t>(layer));
    detail::put<uint8_t>(os, static_cast<uint8_t>(scenario));
    detail::put<uint64_t>(os, runs.size());
    for (const auto & r : runs) {
        detail::put<uint64_t>(os, r.samples.size());
        for (const auto & s : r.samples) {
            detail::put<uint64_t>(os, s.activation.size());
            for (float v : s.activation) {
                detail::put<float>(os, v);
            }
            detail::put<double>(os, s.entropy_nats);
        }
    }
    return sha256_hex(os.str());
}

double canonical_sum(std::vector<double> terms) {
    // total order on the bit patterns, so -0.0 and +0.0 sort deterministically
    auto key = [](double x) {
        const auto bits = std::bit_cast<int64_t>(x);
        return bits ^ static_cast<int64_t>(static_cast<uint64_t>(bits >> 63) >> 1);
    };
    std::sort(terms.begin(), terms.end(), [&](double a, double b) { return key(a) < key(b); });
    double sum = 0.0;
    double comp = 0.0;
    for (double x : terms) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    return sum + comp;
}

namespace {

struct run_partial {
    std::vector<double> weighted;  // sum_t h_t (z_t - mean)
    double entropy_sum = 0.0;
};

run_partial run_contribution(const activation_run & run, size_t d) {
    const size_t T = run.samples.size();
    run_partial out;
    out.weighted.resize(d);
    std::vector<double> terms(T);
    for (size_t i = 0; i < d; ++i) {
        for (size_t t = 0; t < T; ++t) {
            terms[t] = static_cast<double>(run.samples[t].activation[i]);
        }
        const double mean = canonical_sum(terms) / static_cast<double>(T);
        for (size_t t = 0; t < T; ++t) {
            terms[t] = run.samples[t].entropy_nats * (static_cast<double>(run.samples[t].activation[i]) - mean);
        }
        out.weighted[i] = canonical_sum(terms);
    }
    for (size_t t = 0; t < T; ++t) {
        terms[t] = run.samples[t].entropy_nats;
    }
    out.entropy_sum = canonical_sum(terms);
    return out;
}

steering_vector merge(const activation_dataset & dataset, const std::vector<run_partial> & partials, bool parallel) {
    const size_t d = dataset.dim();
    std::vector<double> z_terms;
    for (const auto & p : partials) {
        z_terms.push_back(p.entropy_sum);
    }
    const double Z = canonical_sum(std::move(z_terms));
    if (!(Z > 0.0)) {
        throw error(errc::all_zero_entropy, "steering vector: all entropies are zero");
    }

    steering_vector v;
    v.values.resize(d);
    const auto dd = static_cast<long>(d);
#pragma omp parallel for schedule(static) if (parallel)
    for (long i = 0; i < dd; ++i) {
        std::vector<double> terms(partials.size());
        for (size_t k = 0; k < partials.size(); ++k) {
            terms[k] = partials[k].weighted[static_cast<size_t>(i)];
        }
        v.values[static_cast<size_t>(i)] = canonical_sum(std::move(terms)) / Z;
    }
    v.layer = dataset.layer;
    v.source_scenario = dataset.scenario;
    v.normalizer = Z;
    v.metadata = {
        {"dataset_hash", dataset.hash()},
        {"runs", dataset.runs.size()},
        {"samples", dataset.n_samples()},
        {"control", false},
    };
    return v;
}

} // namespace

steering_vector compute_steering_vector_serial(const activation_dataset & dataset) {
    dataset.validate();
    const size_t d = dataset.dim();
    std::vector<run_partial> partials;
    partials.reserve(dataset.runs.size());
    for (const auto & run : dataset.runs) {
        partials.push_back(run_contribution(run, d));
    }
    return merge(dataset, partials, false);
}

steering_vector compute_steering_vector(const activation_dataset & dataset) {
    dataset.validate();
    const size_t d = dataset.dim();
    std::vector<run_partial> partials(dataset.runs.size());
    const auto K = static_cast<long>(dataset.runs.size());
#pragma omp parallel for schedule(dynamic)
    for (long k = 0; k < K; ++k) {
        partials[static_cast<size_t>(k)] = run_contribution(dataset.runs[static_cast<size_t>(k)], d);
    }
    return merge(dataset, partials, true);
}

steering_spec steering_vector::to_spec(double multiplier, std::optional<int> layer_override) const {
    steering_spec s;
    s.multiplier = multiplier;
    s.layer = layer_override.value_or(layer);
    s.vector.layer = s.layer;
    s.vector.values.reserve(values.size());
    for (double v : values) {
        s.vector.values.push_back(static_cast<float>(v));
    }
    return s;
}

steering_vector shuffle_features(const steering_vector & v, uint64_t seed) {
    if (v.values.empty()) {
        throw error(errc::bad_request, "shuffle_features: empty vector");
    }
    steering_vector out = v;
    rng r(derive_seed(seed, stream::shuffle));
    for (size_t i = out.values.size() - 1; i > 0; --i) {
        const auto j = static_cast<size_t>(r.below(i + 1));
        std::swap(out.values[i], out.values[j]);
    }
    out.control = true;
    out.metadata["control"] = true;
    out.metadata["shuffle_seed"] = seed;
    return out;
}

steering_vector quantized(const steering_vector & v) {
    steering_vector out = v;
    for (double & x : out.values) {
        x = static_cast<double>(static_cast<float>(x));
    }
    return out;
}

void save_vector(const steering_vector & v, const std::filesystem::path & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw error(errc::io, "cannot write " + path.string());
    }
    out.write("EAST", 4);
    detail::put<uint32_t>(out, vector_format_version);
    detail::put<uint32_t>(out, static_cast<uint32_t>(v.values.size()));
    detail::put<uint32_t>(out, static_cast<uint32_t>(v.layer));
    detail::put<uint8_t>(out, static_cast<uint8_t>(v.source_scenario));
    detail::put<uint8_t>(out, v.control ? 1 : 0);
    detail::put<double>(out, v.normalizer);
    for (double x : v.values) {
        detail::put<float>(out, static_cast<float>(x));
    }
    const std::string meta = v.metadata.dump();
    detail::put<uint32_t>(out, static_cast<uint32_t>(meta.size()));
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    if (!out) {
        throw error(errc::io, "write failed for " + path.string());
    }
}

steering_vector load_vector(const std::filesystem::path & path, std::optional<size_t> expected_dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw error(errc::io, "cannot read " + path.string());
    }
    detail::expect_magic(in, "EAST");
    const auto version = detail::get<uint32_t>(in, "version");
    if (version != vector_format_version) {
        throw error(errc::version_mismatch, "vector file version " + std::to_string(version) + ", expected " +
                                                std::to_string(vector_format_version));
    }
    const auto dim = detail::get<uint32_t>(in, "dim");
    if (expected_dim && dim != *expected_dim) {
        throw error(errc::dim_mismatch, "vector file has dim " + std::to_string(dim) + ", expected " +
                                            std::to_string(*expected_dim));
    }
    steering_vector v;
    v.layer = static_cast<int>(detail::get<uint32_t>(in, "layer"));
    const auto scenario = detail::get<uint8_t>(in, "scenario");
    if (scenario > 1) {
        throw error(errc::bad_request, "vector file: unknown scenario tag");
    }
    v.source_scenario = static_cast<scenario_kind>(scenario);
    v.control = detail::get<uint8_t>(in, "control") != 0;
    v.normalizer = detail::get<double>(in, "normalizer");
    v.values.resize(dim);
    for (auto & x : v.values) {
        x = static_cast<double>(detail::get<float>(in, "values"));
    }
    const auto meta_len = detail::get<uint32_t>(in, "metadata length");
    std::string meta(meta_len, '\0');
    in.read(meta.data(), meta_len);
    if (in.gcount() != static_cast<std::streamsize>(meta_len)) {
        throw error(errc::truncated, "truncated file while reading metadata");
    }
    try {
        v.metadata = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::parse_error & e) {
        throw error(errc::bad_request, std::string("vector file: bad metadata: ") + e.what());
    }
    return v;
}

} // namespace east
