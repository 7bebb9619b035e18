#ifndef AVREFINE_TRANSCRIPT_HPP
#define AVREFINE_TRANSCRIPT_HPP

// Text side of forced alignment: character vocabularies, utterance
// normalisation and the concatenated dialogue transcript.

#include "avrefine/error.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace avrefine
{

/// Symbol inventory of a character-level CTC model. Index 0 is the blank.
class Vocabulary
{
public:
    Vocabulary() = default;

    explicit Vocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols))
    {
        if (symbols_.empty()) throw SchemaError("vocabulary: empty symbol list");
        for (std::size_t i = 0; i < symbols_.size(); ++i) {
            if (!index_.emplace(symbols_[i], static_cast<int>(i)).second)
                throw SchemaError("vocabulary: duplicate symbol '" + symbols_[i] + "'");
        }
        if (auto d = find("|")) {
            delimiter_ = *d;
        } else if (auto s = find(" ")) {
            delimiter_ = *s;
        } else {
            throw SchemaError("vocabulary: no word delimiter ('|' or ' ')");
        }
        if (delimiter_ == blank) throw SchemaError("vocabulary: word delimiter cannot be the blank");
    }

    static constexpr int blank = 0;

    int size() const noexcept { return static_cast<int>(symbols_.size()); }
    int word_delimiter() const noexcept { return delimiter_; }
    // Utterance boundary markers share the delimiter symbol.
    int sos() const noexcept { return delimiter_; }
    int eos() const noexcept { return delimiter_; }
    const std::string& symbol(int i) const { return symbols_.at(static_cast<std::size_t>(i)); }
    const std::vector<std::string>& symbols() const noexcept { return symbols_; }

    std::optional<int> find(const std::string& s) const
    {
        auto it = index_.find(s);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    bool operator==(const Vocabulary& o) const { return symbols_ == o.symbols_; }

    /// Character set of the LibriSpeech-finetuned wav2vec 2.0 CTC head.
    static Vocabulary librispeech_chars()
    {
        return Vocabulary({"<pad>", "<s>", "</s>", "<unk>", "|", "E", "T", "A", "O", "N", "I",
                           "H",     "S",   "R",    "D",     "L", "U", "M", "W", "C", "F", "G",
                           "Y",     "P",   "B",    "V",     "K", "'", "X", "J", "Q", "Z"});
    }

private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, int> index_;
    int delimiter_ = -1;
};

inline nlohmann::json to_json(const Vocabulary& v) { return v.symbols(); }

inline Vocabulary vocabulary_from_json(const nlohmann::json& j)
{
    if (!j.is_array()) throw SchemaError("vocabulary: expected a JSON list of symbols");
    return Vocabulary(j.get<std::vector<std::string>>());
}

namespace detail
{

// Decodes one code point; invalid sequences yield U+FFFD and consume one byte.
inline char32_t next_code_point(std::string_view s, std::size_t& i)
{
    const auto b0 = static_cast<unsigned char>(s[i]);
    const auto cont = [&](std::size_t k) {
        return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
    };
    const auto at = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3F); };
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    if ((b0 & 0xE0) == 0xC0 && b0 >= 0xC2 && cont(1)) {
        char32_t cp = (static_cast<char32_t>(b0 & 0x1F) << 6) | at(1);
        i += 2;
        return cp;
    }
    if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        char32_t cp = (static_cast<char32_t>(b0 & 0x0F) << 12) | (at(1) << 6) | at(2);
        if (cp >= 0x800) {
            i += 3;
            return cp;
        }
    }
    if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        char32_t cp = (static_cast<char32_t>(b0 & 0x07) << 18) | (at(1) << 12) | (at(2) << 6) | at(3);
        if (cp >= 0x10000 && cp <= 0x10FFFF) {
            i += 4;
            return cp;
        }
    }
    ++i;
    return 0xFFFD;
}

inline std::string encode_utf8(char32_t cp)
{
    std::string out;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
}

inline bool is_space(char32_t cp)
{
    return cp == ' ' || (cp >= 0x09 && cp <= 0x0D) || cp == 0xA0 || (cp >= 0x2000 && cp <= 0x200A) ||
           cp == 0x202F || cp == 0x3000;
}

inline bool is_apostrophe(char32_t cp) { return cp == '\'' || cp == 0x2018 || cp == 0x2019 || cp == 0x02BC; }

inline bool is_punctuation(char32_t cp)
{
    if (cp < 0x80) return cp > 0x20 && cp < 0x7F && !((cp >= '0' && cp <= '9') || (cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z'));
    return (cp >= 0xA1 && cp <= 0xBF) || cp == 0xD7 || cp == 0xF7 || (cp >= 0x2010 && cp <= 0x205E);
}

inline char32_t to_upper(char32_t cp)
{
    if (cp >= 'a' && cp <= 'z') return cp - 0x20;
    if (cp >= 0xE0 && cp <= 0xFE && cp != 0xF7) return cp - 0x20;
    return cp;
}

} // namespace detail

struct NormalizedUtterance
{
    std::vector<int> tokens;
    std::vector<std::string> dropped; // characters with no vocabulary entry

    bool empty() const noexcept { return tokens.empty(); }
};

/// Uppercases, strips punctuation (apostrophes survive when the vocabulary has
/// one), turns whitespace runs into single word delimiters and drops characters
/// the vocabulary cannot express.
inline NormalizedUtterance normalize_utterance(std::string_view text, const Vocabulary& vocab)
{
    NormalizedUtterance out;
    const auto apostrophe = vocab.find("'");
    bool pending_space = false;
    const auto emit = [&](int token) {
        if (pending_space && !out.tokens.empty()) out.tokens.push_back(vocab.word_delimiter());
        pending_space = false;
        out.tokens.push_back(token);
    };

    for (std::size_t i = 0; i < text.size();) {
        const char32_t cp = detail::next_code_point(text, i);
        if (detail::is_space(cp)) {
            pending_space = true;
        } else if (detail::is_apostrophe(cp)) {
            if (apostrophe) emit(*apostrophe);
        } else if (detail::is_punctuation(cp)) {
            continue;
        } else {
            const std::string sym = detail::encode_utf8(detail::to_upper(cp));
            if (auto idx = vocab.find(sym); idx && *idx != Vocabulary::blank && *idx != vocab.word_delimiter())
                emit(*idx);
            else
                out.dropped.push_back(detail::encode_utf8(cp));
        }
    }
    return out;
}

/// Renders tokens back to text, delimiters as spaces.
inline std::string render(const std::vector<int>& tokens, const Vocabulary& vocab)
{
    std::string out;
    for (int t : tokens) out += t == vocab.word_delimiter() ? std::string(" ") : vocab.symbol(t);
    return out;
}

struct UtteranceBound
{
    int utterance_id = 0;
    std::size_t first = 0; // inclusive indices into ConcatTranscript::chars
    std::size_t last = 0;

    bool operator==(const UtteranceBound&) const = default;
};

struct DroppedChar
{
    int utterance_id = 0;
    std::string character;
};

struct ConcatTranscript
{
    std::vector<int> chars;
    std::vector<UtteranceBound> bounds;
    std::vector<DroppedChar> dropped_chars_report;
    std::vector<int> empty_utterances;
};

inline ConcatTranscript concat_transcripts(const std::vector<std::pair<int, std::string>>& texts,
                                           const Vocabulary& vocab)
{
    ConcatTranscript ct;
    for (const auto& [uid, text] : texts) {
        auto norm = normalize_utterance(text, vocab);
        for (auto& c : norm.dropped) ct.dropped_chars_report.push_back({uid, std::move(c)});
        if (norm.empty()) {
            ct.empty_utterances.push_back(uid);
            continue;
        }
        ct.chars.push_back(vocab.sos());
        const std::size_t first = ct.chars.size();
        ct.chars.insert(ct.chars.end(), norm.tokens.begin(), norm.tokens.end());
        ct.bounds.push_back({uid, first, ct.chars.size() - 1});
        ct.chars.push_back(vocab.eos());
    }
    if (ct.bounds.empty()) throw ValidationError("transcript: every utterance normalizes to empty text");
    return ct;
}

/// Token sequence actually aligned: adjacent eos/sos markers merged into one.
struct AlignmentTokens
{
    std::vector<int> tokens;
    std::vector<std::size_t> position; // transcript index -> index into tokens
};

inline AlignmentTokens alignment_tokens(const ConcatTranscript& ct, const Vocabulary& vocab)
{
    AlignmentTokens at;
    at.position.reserve(ct.chars.size());
    for (std::size_t i = 0; i < ct.chars.size(); ++i) {
        const int c = ct.chars[i];
        if (c == vocab.word_delimiter() && !at.tokens.empty() && at.tokens.back() == c) {
            at.position.push_back(at.tokens.size() - 1);
            continue;
        }
        at.position.push_back(at.tokens.size());
        at.tokens.push_back(c);
    }
    return at;
}

} // namespace avrefine

#endif // AVREFINE_TRANSCRIPT_HPP
