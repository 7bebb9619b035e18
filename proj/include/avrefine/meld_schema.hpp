#ifndef AVREFINE_MELD_SCHEMA_HPP
#define AVREFINE_MELD_SCHEMA_HPP

// MELD-style utterance records: CSV parsing, clock timestamps, repair
// overrides and grouping into chronologically ordered dialogues.

#include "avrefine/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace avrefine
{

using Millis = std::int64_t;

enum class Split { train, dev, test };
enum class Emotion { neutral, joy, surprise, sadness, fear, anger, disgust };
enum class Sentiment { positive, negative, neutral };

namespace detail
{

inline std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <class E, std::size_t N>
std::optional<E> enum_from(std::string_view text, const std::array<std::string_view, N>& names)
{
    const std::string key = lower(trim(text));
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == key) return static_cast<E>(i);
    return std::nullopt;
}

inline constexpr std::array<std::string_view, 3> split_names{"train", "dev", "test"};
inline constexpr std::array<std::string_view, 7> emotion_names{
    "neutral", "joy", "surprise", "sadness", "fear", "anger", "disgust"};
inline constexpr std::array<std::string_view, 3> sentiment_names{"positive", "negative", "neutral"};

inline long long parse_int(std::string_view text, const std::string& field)
{
    text = trim(text);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
        throw ParseError(field, "not an integer: '" + std::string(text) + "'");
    return v;
}

} // namespace detail

inline std::string_view to_string(Split s) { return detail::split_names[static_cast<int>(s)]; }
inline std::string_view to_string(Emotion e) { return detail::emotion_names[static_cast<int>(e)]; }
inline std::string_view to_string(Sentiment s) { return detail::sentiment_names[static_cast<int>(s)]; }

inline std::optional<Split> split_from_string(std::string_view s)
{
    return detail::enum_from<Split>(s, detail::split_names);
}
inline std::optional<Emotion> emotion_from_string(std::string_view s)
{
    return detail::enum_from<Emotion>(s, detail::emotion_names);
}
inline std::optional<Sentiment> sentiment_from_string(std::string_view s)
{
    return detail::enum_from<Sentiment>(s, detail::sentiment_names);
}

inline constexpr std::array<Emotion, 7> all_emotions{Emotion::neutral, Emotion::joy,   Emotion::surprise,
                                                     Emotion::sadness, Emotion::fear,  Emotion::anger,
                                                     Emotion::disgust};

struct DialogueKey
{
    Split split = Split::train;
    int dialogue_id = 0;

    auto operator<=>(const DialogueKey&) const = default;

    /// "train/446"
    std::string str() const { return std::string(to_string(split)) + "/" + std::to_string(dialogue_id); }
};

struct UtteranceKey
{
    Split split = Split::train;
    int dialogue_id = 0;
    int utterance_id = 0;

    auto operator<=>(const UtteranceKey&) const = default;

    std::string str() const
    {
        return std::string(to_string(split)) + "/" + std::to_string(dialogue_id) + "/" +
               std::to_string(utterance_id);
    }
};

struct UtteranceRecord
{
    Split split = Split::train;
    int dialogue_id = 0;
    int utterance_id = 0;
    std::string speaker;
    Emotion emotion = Emotion::neutral;
    Sentiment sentiment = Sentiment::neutral;
    int season = 0;
    int episode = 0;
    Millis start_ms = 0;
    Millis end_ms = 0;
    std::string text;

    // Dialogue the record was read from; differs from dialogue_id after reassignment.
    int source_dialogue_id = 0;
    // Negative ranks sort ahead of the chronological order (pinned first utterance).
    int order_rank = 0;

    /// Key of the input row, stable across overrides.
    UtteranceKey key() const { return {split, source_dialogue_id, utterance_id}; }
    DialogueKey dialogue() const { return {split, dialogue_id}; }

    bool operator==(const UtteranceRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Timestamps

/// Parses "H:MM:SS.mmm" (hours may have any number of digits; ',' is accepted
/// as the millisecond separator, as found in the distributed CSV files).
inline Millis parse_timestamp(std::string_view text, const std::string& field = "timestamp")
{
    const std::string_view s = detail::trim(text);
    const auto bad = [&](const char* why) {
        return ParseError(field, std::string(why) + " in '" + std::string(s) + "'");
    };
    const auto c1 = s.find(':');
    if (c1 == std::string_view::npos || c1 == 0) throw bad("missing hours");
    const auto c2 = s.find(':', c1 + 1);
    if (c2 == std::string_view::npos || c2 != c1 + 3) throw bad("minutes must have two digits");
    const auto dot = s.find_first_of(".,", c2 + 1);
    if (dot == std::string_view::npos || dot != c2 + 3) throw bad("seconds must have two digits");
    if (s.size() != dot + 4) throw bad("milliseconds must have three digits");

    const auto digits = [&](std::string_view part) {
        if (part.empty() || !std::all_of(part.begin(), part.end(),
                                         [](unsigned char c) { return std::isdigit(c) != 0; }))
            throw bad("non-digit character");
        long long v = 0;
        std::from_chars(part.data(), part.data() + part.size(), v);
        return v;
    };
    const long long h = digits(s.substr(0, c1));
    const long long m = digits(s.substr(c1 + 1, 2));
    const long long sec = digits(s.substr(c2 + 1, 2));
    const long long ms = digits(s.substr(dot + 1, 3));
    if (m >= 60) throw bad("minutes out of range");
    if (sec >= 60) throw bad("seconds out of range");
    return ((h * 60 + m) * 60 + sec) * 1000 + ms;
}

inline std::string format_timestamp(Millis ms)
{
    if (ms < 0) throw RangeError("format_timestamp: negative time");
    const Millis h = ms / 3'600'000;
    const Millis m = ms / 60'000 % 60;
    const Millis s = ms / 1000 % 60;
    const Millis f = ms % 1000;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%lld:%02lld:%02lld.%03lld", static_cast<long long>(h),
                  static_cast<long long>(m), static_cast<long long>(s), static_cast<long long>(f));
    return buf;
}

// ---------------------------------------------------------------------------
// CSV

/// RFC 4180 reader: quoted fields, doubled quotes, embedded newlines, CRLF, UTF-8 BOM.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text)
{
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;

    const auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    const auto end_row = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
        row.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            end_row();
        } else if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') continue;
            end_row();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (quoted) throw SchemaError("csv: unterminated quoted field");
    if (field_started || !row.empty()) end_row();
    return rows;
}

struct RowError
{
    std::size_t row = 0; // 1-based data row number (header excluded)
    std::string message;
};

struct RecordParseResult
{
    std::vector<UtteranceRecord> records;
    std::vector<RowError> errors;
};

/// Reads one split's CSV. Missing required columns throw SchemaError; bad rows
/// are skipped and reported.
inline RecordParseResult parse_records(std::string_view csv_payload, Split split)
{
    auto rows = parse_csv(csv_payload);
    if (rows.empty()) throw SchemaError("csv: missing header row");

    static constexpr std::array<std::string_view, 10> required{
        "Dialogue_ID", "Utterance_ID", "Speaker", "Emotion",  "Sentiment",
        "Season",      "Episode",      "StartTime", "EndTime", "Utterance"};
    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < rows[0].size(); ++i)
        column.emplace(std::string(detail::trim(rows[0][i])), i);
    std::array<std::size_t, required.size()> idx{};
    for (std::size_t i = 0; i < required.size(); ++i) {
        auto it = column.find(std::string(required[i]));
        if (it == column.end()) throw SchemaError("csv: missing required column '" + std::string(required[i]) + "'");
        idx[i] = it->second;
    }

    RecordParseResult out;
    std::set<UtteranceKey> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const auto cell = [&](std::size_t k) -> const std::string& {
            if (idx[k] >= row.size())
                throw ParseError(std::string(required[k]), "row has only " + std::to_string(row.size()) + " fields");
            return row[idx[k]];
        };
        try {
            UtteranceRecord rec;
            rec.split = split;
            rec.dialogue_id = static_cast<int>(detail::parse_int(cell(0), "Dialogue_ID"));
            rec.utterance_id = static_cast<int>(detail::parse_int(cell(1), "Utterance_ID"));
            rec.source_dialogue_id = rec.dialogue_id;
            rec.speaker = std::string(detail::trim(cell(2)));
            auto emo = emotion_from_string(cell(3));
            if (!emo) throw ParseError("Emotion", "unknown label '" + cell(3) + "'");
            rec.emotion = *emo;
            auto sent = sentiment_from_string(cell(4));
            if (!sent) throw ParseError("Sentiment", "unknown label '" + cell(4) + "'");
            rec.sentiment = *sent;
            rec.season = static_cast<int>(detail::parse_int(cell(5), "Season"));
            rec.episode = static_cast<int>(detail::parse_int(cell(6), "Episode"));
            rec.start_ms = parse_timestamp(cell(7), "StartTime");
            rec.end_ms = parse_timestamp(cell(8), "EndTime");
            rec.text = cell(9);
            if (rec.start_ms >= rec.end_ms) throw ParseError("EndTime", "end does not follow start");
            if (!seen.insert(rec.key()).second) throw ParseError("Utterance_ID", "duplicate key " + rec.key().str());
            out.records.push_back(std::move(rec));
        } catch (const ParseError& e) {
            out.errors.push_back({r, e.what()});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Overrides

enum class OverrideAction { reassign_dialogue, strip_description, drop, resort_dialogue };

inline constexpr std::array<std::string_view, 4> override_action_names{"reassign_dialogue", "strip_description",
                                                                       "drop", "resort_dialogue"};

inline std::string_view to_string(OverrideAction a) { return override_action_names[static_cast<int>(a)]; }

struct Override
{
    Split split = Split::train;
    int dialogue_id = 0;
    std::optional<int> utterance_id; // absent for dialogue-level actions
    OverrideAction action = OverrideAction::drop;
    std::string payload;
};

using OverrideList = std::vector<Override>;

inline OverrideList overrides_from_json(const nlohmann::json& j)
{
    if (!j.is_array()) throw SchemaError("overrides: expected a JSON array");
    OverrideList out;
    for (const auto& e : j) {
        Override o;
        auto split = split_from_string(e.at("split").get<std::string>());
        if (!split) throw SchemaError("overrides: unknown split " + e.at("split").dump());
        o.split = *split;
        o.dialogue_id = e.at("dialogue_id").get<int>();
        if (e.contains("utterance_id") && !e["utterance_id"].is_null()) o.utterance_id = e["utterance_id"].get<int>();
        const auto action = e.at("action").get<std::string>();
        auto it = std::find(override_action_names.begin(), override_action_names.end(), action);
        if (it == override_action_names.end()) throw SchemaError("overrides: unknown action '" + action + "'");
        o.action = static_cast<OverrideAction>(it - override_action_names.begin());
        o.payload = e.value("payload", std::string{});
        if (o.action != OverrideAction::resort_dialogue && !o.utterance_id)
            throw SchemaError("overrides: action '" + action + "' needs an utterance_id");
        out.push_back(std::move(o));
    }
    return out;
}

inline nlohmann::json to_json(const Override& o)
{
    return {{"split", to_string(o.split)},
            {"dialogue_id", o.dialogue_id},
            {"utterance_id", o.utterance_id ? nlohmann::json(*o.utterance_id) : nlohmann::json(nullptr)},
            {"action", to_string(o.action)},
            {"payload", o.payload}};
}

struct OverrideOutcome
{
    Override entry;
    bool applied = false; // false: dangling key
    std::string detail;
};

struct OverrideReport
{
    std::vector<OverrideOutcome> outcomes;
    std::vector<UtteranceRecord> dropped;
    std::set<DialogueKey> resorted;

    std::size_t dangling() const
    {
        return static_cast<std::size_t>(
            std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return !o.applied; }));
    }
};

/// Removes "( ... )" and "[ ... ]" spans (nesting allowed), then collapses the
/// whitespace left behind.
inline std::string strip_description(std::string_view text)
{
    std::string kept;
    int depth = 0;
    for (char c : text) {
        if (c == '(' || c == '[') {
            ++depth;
        } else if ((c == ')' || c == ']') && depth > 0) {
            --depth;
        } else if (depth == 0) {
            kept.push_back(c);
        }
    }
    std::string out;
    bool space = false;
    for (char c : kept) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
        } else {
            if (space) out.push_back(' ');
            space = false;
            out.push_back(c);
        }
    }
    return out;
}

inline std::pair<std::vector<UtteranceRecord>, OverrideReport> apply_overrides(std::vector<UtteranceRecord> records,
                                                                              const OverrideList& overrides)
{
    OverrideReport report;
    const auto find = [&](const Override& o) {
        return std::find_if(records.begin(), records.end(), [&](const UtteranceRecord& r) {
            return r.split == o.split && r.source_dialogue_id == o.dialogue_id && r.utterance_id == *o.utterance_id;
        });
    };

    for (const auto& o : overrides) {
        OverrideOutcome outcome{o, false, {}};
        if (o.action == OverrideAction::resort_dialogue) {
            const bool exists = std::any_of(records.begin(), records.end(), [&](const UtteranceRecord& r) {
                return r.split == o.split && r.dialogue_id == o.dialogue_id;
            });
            if (exists) {
                report.resorted.insert({o.split, o.dialogue_id});
                outcome.applied = true;
                outcome.detail = "dialogue sorted chronologically";
            } else {
                outcome.detail = "no such dialogue";
            }
            report.outcomes.push_back(std::move(outcome));
            continue;
        }

        auto it = find(o);
        if (it == records.end()) {
            outcome.detail = "no such record";
            report.outcomes.push_back(std::move(outcome));
            continue;
        }
        outcome.applied = true;
        switch (o.action) {
        case OverrideAction::reassign_dialogue: {
            const int target = static_cast<int>(detail::parse_int(o.payload, "payload"));
            it->dialogue_id = target;
            it->order_rank = -1;
            outcome.detail = "moved to dialogue " + std::to_string(target) + " as first utterance";
            break;
        }
        case OverrideAction::strip_description:
            it->text = strip_description(it->text);
            outcome.detail = "text now '" + it->text + "'";
            break;
        case OverrideAction::drop:
            report.dropped.push_back(*it);
            records.erase(it);
            outcome.detail = o.payload.empty() ? "dropped" : "dropped: " + o.payload;
            break;
        case OverrideAction::resort_dialogue:
            break;
        }
        report.outcomes.push_back(std::move(outcome));
    }
    return {std::move(records), std::move(report)};
}

// ---------------------------------------------------------------------------
// Dialogues

struct Dialogue
{
    DialogueKey key;
    std::vector<UtteranceRecord> utterances;
};

inline bool chronological(const UtteranceRecord& a, const UtteranceRecord& b)
{
    return std::tie(a.order_rank, a.start_ms, a.utterance_id) < std::tie(b.order_rank, b.start_ms, b.utterance_id);
}

/// Partitions by (split, dialogue_id) and orders each dialogue chronologically.
/// Dialogues come out in key order.
inline std::vector<Dialogue> group_dialogues(const std::vector<UtteranceRecord>& records)
{
    std::map<DialogueKey, std::vector<UtteranceRecord>> by_key;
    for (const auto& r : records) by_key[r.dialogue()].push_back(r);
    std::vector<Dialogue> out;
    out.reserve(by_key.size());
    for (auto& [key, utts] : by_key) {
        std::stable_sort(utts.begin(), utts.end(), chronological);
        out.push_back({key, std::move(utts)});
    }
    return out;
}

} // namespace avrefine

#endif // AVREFINE_MELD_SCHEMA_HPP
