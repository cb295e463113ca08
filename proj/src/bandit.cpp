#include "east/bandit.hpp"

#include "east/error.hpp"

#include <charconv>
#include <cmath>
#include <string>

namespace east {

void bandit_config::validate() const {
    if (means.size() != stddevs.size()) {
        throw error(errc::invalid_config, "bandit: means and stddevs differ in length");
    }
    if (means.size() < 2) {
        throw error(errc::invalid_config, "bandit: at least 2 arms required");
    }
    for (double s : stddevs) {
        // zero is tolerated for deterministic test arms; negative or NaN is not
        if (!(s >= 0.0) || !std::isfinite(s)) {
            throw error(errc::invalid_config, "bandit: stddev must be nonnegative and finite");
        }
    }
    for (double m : means) {
        if (!std::isfinite(m)) {
            throw error(errc::invalid_config, "bandit: mean must be finite");
        }
    }
    if (horizon < 1) {
        throw error(errc::invalid_config, "bandit: horizon must be >= 1");
    }
}

bandit_env::bandit_env(bandit_config config)
    : config_(std::move(config)), rng_(derive_seed(config_.seed, stream::env)) {
    config_.validate();
}

reward bandit_env::pull(size_t arm) {
    if (arm >= config_.n_arms()) {
        throw error(errc::arm_out_of_range, "bandit: arm " + std::to_string(arm) + " out of range");
    }
    if (timestep_ >= config_.horizon) {
        throw error(errc::horizon_exceeded, "bandit: horizon exceeded");
    }
    ++timestep_;
    // every pull consumes the same number of draws, so the stream only
    // depends on the seed and the number of pulls
    const double z = rng_.normal();
    return {config_.means[arm] + config_.stddevs[arm] * z, arm, timestep_};
}

std::string format_two_decimals(double value) {
    char buf[512];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed);
    std::string digits(buf, res.ptr);

    bool negative = false;
    if (!digits.empty() && digits.front() == '-') {
        negative = true;
        digits.erase(digits.begin());
    }
    std::string int_part = digits;
    std::string frac;
    if (const auto dot = digits.find('.'); dot != std::string::npos) {
        int_part = digits.substr(0, dot);
        frac = digits.substr(dot + 1);
    }

    // decide rounding on the digits past the second decimal
    bool round_up = false;
    if (frac.size() > 2) {
        const char first = frac[2];
        const bool rest_nonzero = frac.find_first_not_of('0', 3) != std::string::npos;
        if (first > '5' || (first == '5' && rest_nonzero)) {
            round_up = true;
        } else if (first == '5') {
            const char last_kept = frac[1];
            round_up = ((last_kept - '0') % 2) == 1;
        }
        frac.resize(2);
    }
    while (frac.size() < 2) {
        frac.push_back('0');
    }

    std::string number = int_part + frac;
    if (round_up) {
        int i = static_cast<int>(number.size()) - 1;
        while (i >= 0) {
            if (number[i] == '9') {
                number[i] = '0';
                --i;
            } else {
                ++number[i];
                break;
            }
        }
        if (i < 0) {
            number.insert(number.begin(), '1');
        }
    }
    std::string out = number.substr(0, number.size() - 2) + "." + number.substr(number.size() - 2);
    if (negative && out.find_first_not_of("0.") != std::string::npos) {
        out.insert(out.begin(), '-');
    }
    return out;
}

std::string feedback_text(const reward & r, scenario_kind scenario) {
    const char * unit = scenario == scenario_kind::buttons ? "points" : "dollars";
    return "Result: You received " + format_two_decimals(r.value) + " " + unit + ".";
}

} // namespace east
