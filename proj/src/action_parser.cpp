#include "east/action_parser.hpp"

#include "east/error.hpp"

namespace east {

namespace {

char lower(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

bool is_alnum(char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_blank(char c) {
    return c == ' ' || c == '\t';
}

bool starts_with_ci(std::string_view text, size_t pos, std::string_view word) {
    if (pos + word.size() > text.size()) {
        return false;
    }
    for (size_t i = 0; i < word.size(); ++i) {
        if (lower(text[pos + i]) != word[i]) {
            return false;
        }
    }
    return true;
}

struct mention {
    size_t begin;
    size_t end;
    unsigned long number;
};

// matches entity words separated by blanks, then blanks, then digits;
// the digits must not run into a letter or further digit
std::optional<mention> match_entity_at(std::string_view text, size_t pos, std::span<const std::string_view> words) {
    if (pos > 0 && is_alnum(text[pos - 1])) {
        return std::nullopt;
    }
    size_t i = pos;
    for (size_t w = 0; w < words.size(); ++w) {
        if (w > 0) {
            const size_t start = i;
            while (i < text.size() && is_blank(text[i])) {
                ++i;
            }
            if (i == start) {
                return std::nullopt;
            }
        }
        if (!starts_with_ci(text, i, words[w])) {
            return std::nullopt;
        }
        i += words[w].size();
    }
    const size_t after_word = i;
    while (i < text.size() && is_blank(text[i])) {
        ++i;
    }
    if (i == after_word) {
        return std::nullopt;
    }
    const size_t digits_begin = i;
    unsigned long n = 0;
    while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
        if (i - digits_begin < 9) {
            n = n * 10 + static_cast<unsigned long>(text[i] - '0');
        } else {
            n = ~0ul;  // too long to be an arm number
        }
        ++i;
    }
    if (i == digits_begin) {
        return std::nullopt;
    }
    if (i < text.size() && is_alnum(text[i])) {
        return std::nullopt;
    }
    return mention{pos, i, n};
}

std::optional<mention> last_mention(std::string_view text, size_t offset, scenario_kind scenario) {
    static constexpr std::string_view button_words[] = {"button"};
    static constexpr std::string_view slot_words[] = {"slot", "machine"};
    const std::span<const std::string_view> words = scenario == scenario_kind::buttons
        ? std::span<const std::string_view>(button_words)
        : std::span<const std::string_view>(slot_words);

    std::optional<mention> found;
    for (size_t pos = 0; pos < text.size(); ++pos) {
        if (lower(text[pos]) != words[0][0]) {
            continue;
        }
        if (auto m = match_entity_at(text, pos, words)) {
            found = mention{m->begin + offset, m->end + offset, m->number};
            pos = m->end - 1;
        }
    }
    return found;
}

} // namespace

bool is_valid_utf8(std::string_view bytes) {
    size_t i = 0;
    while (i < bytes.size()) {
        const auto c = static_cast<unsigned char>(bytes[i]);
        size_t len = 0;
        uint32_t cp = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + len > bytes.size()) {
            return false;
        }
        for (size_t k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(bytes[i + k]);
            if ((cc & 0xC0) != 0x80) {
                return false;
            }
            cp = (cp << 6) | (cc & 0x3F);
        }
        // overlong forms, surrogates, out of range
        if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
            cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            return false;
        }
        i += len;
    }
    return true;
}

std::optional<parsed_action> parse_action(std::string_view completion, scenario_kind scenario, size_t n_arms) {
    if (!is_valid_utf8(completion)) {
        throw error(errc::malformed_utf8, "parse_action: completion is not valid UTF-8");
    }

    // locate the last "Action:" line
    std::optional<std::pair<size_t, size_t>> action_line;
    size_t line_begin = 0;
    while (line_begin <= completion.size()) {
        size_t line_end = completion.find('\n', line_begin);
        if (line_end == std::string_view::npos) {
            line_end = completion.size();
        }
        size_t p = line_begin;
        while (p < line_end && is_blank(completion[p])) {
            ++p;
        }
        if (starts_with_ci(completion.substr(0, line_end), p, "action:")) {
            action_line = {line_begin, line_end};
        }
        if (line_end == completion.size()) {
            break;
        }
        line_begin = line_end + 1;
    }

    std::optional<mention> m;
    if (action_line) {
        const auto [b, e] = *action_line;
        m = last_mention(completion.substr(b, e - b), b, scenario);
    } else {
        m = last_mention(completion, 0, scenario);
    }
    if (!m || m->number < 1 || m->number > n_arms) {
        return std::nullopt;
    }
    return parsed_action{m->number - 1, m->begin, m->end};
}

batch_parse parse_batch(std::span<const std::string> completions, scenario_kind scenario, size_t n_arms) {
    batch_parse out;
    out.per_completion.reserve(completions.size());
    for (const auto & c : completions) {
        std::optional<size_t> arm;
        // a malformed completion is simply not a valid action here
        if (is_valid_utf8(c)) {
            if (auto p = parse_action(c, scenario, n_arms)) {
                arm = p->arm;
            }
        }
        out.per_completion.push_back(arm);
        if (arm) {
            out.valid_actions.push_back(*arm);
        } else {
            ++out.n_invalid;
        }
    }
    return out;
}

} // namespace east
