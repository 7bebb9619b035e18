#ifndef AVREFINE_CTCSEG_HPP
#define AVREFINE_CTCSEG_HPP

// Forced alignment of a known character sequence against frame-level CTC
// log-posteriors: maximum-joint-probability dynamic programming with full
// backpointers, plus extraction of per-utterance time spans.

#include "avrefine/error.hpp"
#include "avrefine/meld_schema.hpp"
#include "avrefine/transcript.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace avrefine
{

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// Frames x vocabulary natural-log posteriors, row-major.
struct PosteriorMatrix
{
    int frames = 0;
    Vocabulary vocab;
    double frame_duration_ms = 20.0;
    std::string dialogue_key;
    std::vector<float> logprobs;

    double at(int t, int v) const
    {
        return logprobs[static_cast<std::size_t>(t) * static_cast<std::size_t>(vocab.size()) +
                        static_cast<std::size_t>(v)];
    }

    std::span<const float> row(int t) const
    {
        return {logprobs.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(vocab.size()),
                static_cast<std::size_t>(vocab.size())};
    }

    /// Throws ValidationError on shape errors or rows that are not normalised.
    void validate(double tolerance = 1e-3) const
    {
        if (frames < 1) throw ValidationError("posteriors " + dialogue_key + ": no frames");
        if (!(frame_duration_ms > 0)) throw ValidationError("posteriors " + dialogue_key + ": bad frame duration");
        if (logprobs.size() != static_cast<std::size_t>(frames) * static_cast<std::size_t>(vocab.size()))
            throw ValidationError("posteriors " + dialogue_key + ": payload size does not match header");
        for (int t = 0; t < frames; ++t) {
            const auto r = row(t);
            const double mx = *std::max_element(r.begin(), r.end());
            double acc = 0;
            for (float v : r) acc += std::exp(static_cast<double>(v) - mx);
            const double lse = mx + std::log(acc);
            if (!(std::abs(lse) <= tolerance))
                throw ValidationError("posteriors " + dialogue_key + ": row " + std::to_string(t) +
                                      " log-sum-exp is " + std::to_string(lse));
        }
    }
};

inline constexpr std::array<char, 8> posterior_magic{'C', 'T', 'C', 'P', '0', '0', '0', '1'};

namespace detail
{

inline void put_u32le(std::ostream& os, std::uint32_t v)
{
    const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                       static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    os.write(b, 4);
}

inline std::uint32_t get_u32le(const unsigned char* b)
{
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace detail

/// CTCP0001: magic, u32le header length, JSON header, f32le payload.
inline void write_posteriors(std::ostream& os, const PosteriorMatrix& pm)
{
    const nlohmann::json header{{"frames", pm.frames},
                                {"vocab", pm.vocab.symbols()},
                                {"frame_duration_ms", pm.frame_duration_ms},
                                {"dialogue_key", pm.dialogue_key}};
    const std::string h = header.dump();
    os.write(posterior_magic.data(), posterior_magic.size());
    detail::put_u32le(os, static_cast<std::uint32_t>(h.size()));
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (float v : pm.logprobs) detail::put_u32le(os, std::bit_cast<std::uint32_t>(v));
    if (!os) throw Error("write_posteriors: stream failure");
}

inline PosteriorMatrix read_posteriors(std::istream& is)
{
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != posterior_magic)
        throw SchemaError("posteriors: bad magic (expected CTCP0001)");
    unsigned char lenb[4];
    if (!is.read(reinterpret_cast<char*>(lenb), 4)) throw SchemaError("posteriors: truncated header length");
    std::string h(detail::get_u32le(lenb), '\0');
    if (!is.read(h.data(), static_cast<std::streamsize>(h.size()))) throw SchemaError("posteriors: truncated header");
    const auto header = nlohmann::json::parse(h);

    PosteriorMatrix pm;
    pm.frames = header.at("frames").get<int>();
    pm.vocab = vocabulary_from_json(header.at("vocab"));
    pm.frame_duration_ms = header.at("frame_duration_ms").get<double>();
    pm.dialogue_key = header.value("dialogue_key", std::string{});
    if (pm.frames < 0) throw SchemaError("posteriors: negative frame count");
    const std::size_t n = static_cast<std::size_t>(pm.frames) * static_cast<std::size_t>(pm.vocab.size());
    std::vector<unsigned char> raw(n * 4);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw SchemaError("posteriors: payload shorter than frames x vocab");
    if (is.peek() != std::char_traits<char>::eof()) throw SchemaError("posteriors: trailing bytes after payload");
    pm.logprobs.resize(n);
    for (std::size_t i = 0; i < n; ++i) pm.logprobs[i] = std::bit_cast<float>(detail::get_u32le(&raw[4 * i]));
    return pm;
}

/// [blank, c1, blank, c2, ..., cN, blank]
inline std::vector<int> expand_with_blanks(std::span<const int> chars)
{
    std::vector<int> out;
    out.reserve(2 * chars.size() + 1);
    out.push_back(Vocabulary::blank);
    for (int c : chars) {
        out.push_back(c);
        out.push_back(Vocabulary::blank);
    }
    return out;
}

/// Fewest frames any CTC path over `expanded` needs: one per symbol plus a blank
/// between equal neighbours.
inline int min_frames(std::span<const int> expanded)
{
    int n = 0;
    int prev = -1;
    for (int z : expanded) {
        if (z == Vocabulary::blank) continue;
        n += (z == prev) ? 2 : 1;
        prev = z;
    }
    return n;
}

struct CharAlignment
{
    std::vector<int> expanded;
    std::vector<int> state_path;        // per frame, index into expanded
    std::vector<int> emission_frame;    // per expanded symbol; -1 when skipped
    std::vector<double> symbol_logprob; // at the emission frame; NaN when skipped
    double total = neg_inf;
};

namespace detail
{
enum : std::uint8_t { from_stay = 0, from_prev = 1, from_skip = 2, from_start = 3 };
}

/// Viterbi pass over the CTC state lattice. Every frame is scored; the path
/// starts in state 0 or 1 and ends in one of the last two states. Ties prefer
/// staying, then a single advance; at the end, the trailing blank.
inline CharAlignment viterbi_align(const PosteriorMatrix& post, std::span<const int> expanded)
{
    const int T = post.frames;
    const int S = static_cast<int>(expanded.size());
    if (S == 0) throw InfeasibleAlignment("viterbi_align: empty state sequence");
    if (T < 1 || T < min_frames(expanded))
        throw InfeasibleAlignment("viterbi_align: " + std::to_string(T) + " frames cannot hold " +
                                  std::to_string(min_frames(expanded)) + " required emissions");
    for (int z : expanded)
        if (z < 0 || z >= post.vocab.size()) throw ValidationError("viterbi_align: symbol outside vocabulary");

    std::vector<std::uint8_t> back(static_cast<std::size_t>(T) * static_cast<std::size_t>(S), detail::from_start);
    std::vector<double> prev(static_cast<std::size_t>(S), neg_inf);
    std::vector<double> cur(static_cast<std::size_t>(S), neg_inf);

    prev[0] = post.at(0, expanded[0]);
    if (S > 1) prev[1] = post.at(0, expanded[1]);

    for (int t = 1; t < T; ++t) {
        std::uint8_t* bp = &back[static_cast<std::size_t>(t) * static_cast<std::size_t>(S)];
        const int reach = std::min(S, 2 * t + 2);
        for (int s = 0; s < reach; ++s) {
            double best = prev[static_cast<std::size_t>(s)];
            std::uint8_t how = detail::from_stay;
            if (s >= 1 && prev[static_cast<std::size_t>(s - 1)] > best) {
                best = prev[static_cast<std::size_t>(s - 1)];
                how = detail::from_prev;
            }
            if (s >= 2 && expanded[static_cast<std::size_t>(s)] != Vocabulary::blank &&
                expanded[static_cast<std::size_t>(s)] != expanded[static_cast<std::size_t>(s - 2)] &&
                prev[static_cast<std::size_t>(s - 2)] > best) {
                best = prev[static_cast<std::size_t>(s - 2)];
                how = detail::from_skip;
            }
            cur[static_cast<std::size_t>(s)] = best == neg_inf ? neg_inf : best + post.at(t, expanded[static_cast<std::size_t>(s)]);
            bp[s] = how;
        }
        std::fill(cur.begin() + reach, cur.end(), neg_inf);
        std::swap(prev, cur);
    }

    int state = S - 1;
    if (S > 1 && prev[static_cast<std::size_t>(S - 2)] > prev[static_cast<std::size_t>(S - 1)]) state = S - 2;
    if (prev[static_cast<std::size_t>(state)] == neg_inf)
        throw InfeasibleAlignment("viterbi_align: no complete path through the lattice");

    CharAlignment out;
    out.expanded.assign(expanded.begin(), expanded.end());
    out.total = prev[static_cast<std::size_t>(state)];
    out.state_path.assign(static_cast<std::size_t>(T), 0);
    for (int t = T - 1; t >= 0; --t) {
        out.state_path[static_cast<std::size_t>(t)] = state;
        if (t == 0) break;
        const auto how = back[static_cast<std::size_t>(t) * static_cast<std::size_t>(S) + static_cast<std::size_t>(state)];
        state -= (how == detail::from_prev) ? 1 : (how == detail::from_skip) ? 2 : 0;
    }

    out.emission_frame.assign(static_cast<std::size_t>(S), -1);
    out.symbol_logprob.assign(static_cast<std::size_t>(S), std::numeric_limits<double>::quiet_NaN());
    for (int t = 0; t < T; ++t) {
        const auto s = static_cast<std::size_t>(out.state_path[static_cast<std::size_t>(t)]);
        if (out.emission_frame[s] < 0) {
            out.emission_frame[s] = t;
            out.symbol_logprob[s] = post.at(t, expanded[s]);
        }
    }
    return out;
}

enum class SpanStatus { aligned, dropped_short, dropped_low_confidence, degenerate };

inline std::string_view to_string(SpanStatus s)
{
    switch (s) {
    case SpanStatus::aligned: return "aligned";
    case SpanStatus::dropped_short: return "dropped_short";
    case SpanStatus::dropped_low_confidence: return "dropped_low_confidence";
    case SpanStatus::degenerate: return "degenerate";
    }
    return "?";
}

struct AlignedSpan
{
    int utterance_id = 0;
    Millis global_start_ms = 0;
    Millis global_end_ms = 0;
    double confidence = 0;
    SpanStatus status = SpanStatus::aligned;
    int first_frame = 0;
    int last_frame = 0;

    Millis length() const { return global_end_ms - global_start_ms; }
};

/// One span per bound: [frame(first char), frame(last char) + 1) in ms, with the
/// mean per-character log-probability as confidence. `position` maps transcript
/// indices to aligned-token indices; empty means identity.
inline std::vector<AlignedSpan> utterance_spans(const CharAlignment& align, std::span<const UtteranceBound> bounds,
                                                double frame_duration_ms,
                                                std::span<const std::size_t> position = {})
{
    const auto state_of = [&](std::size_t i) {
        const std::size_t p = position.empty() ? i : position[i];
        const std::size_t s = 2 * p + 1;
        if (s >= align.expanded.size()) throw RangeError("utterance_spans: bound outside the alignment");
        return s;
    };
    std::vector<AlignedSpan> out;
    out.reserve(bounds.size());
    for (const auto& b : bounds) {
        AlignedSpan span;
        span.utterance_id = b.utterance_id;
        span.first_frame = align.emission_frame[state_of(b.first)];
        span.last_frame = align.emission_frame[state_of(b.last)];
        span.global_start_ms = std::llround(span.first_frame * frame_duration_ms);
        span.global_end_ms = std::llround((span.last_frame + 1) * frame_duration_ms);
        double acc = 0;
        for (std::size_t i = b.first; i <= b.last; ++i) acc += align.symbol_logprob[state_of(i)];
        span.confidence = acc / static_cast<double>(b.last - b.first + 1);
        out.push_back(span);
    }
    return out;
}

inline constexpr Millis default_min_span_ms = 200;
inline const double default_min_confidence = std::log(0.01);

inline std::vector<AlignedSpan> filter_spans(std::vector<AlignedSpan> spans, Millis min_span_ms, double min_confidence)
{
    for (auto& s : spans) {
        if (s.status == SpanStatus::degenerate) continue;
        if (s.length() < min_span_ms)
            s.status = SpanStatus::dropped_short;
        else if (s.confidence < min_confidence)
            s.status = SpanStatus::dropped_low_confidence;
        else
            s.status = SpanStatus::aligned;
    }
    return spans;
}

} // namespace avrefine

#endif // AVREFINE_CTCSEG_HPP
