#pragma once

// Turns timestamped per-speaker word segments plus an undiarized
// utterance stream into a clean, speaker-attributed Dialogue: activity
// masks from single-speaker tracks, silence-trim offsets, maximal
// temporal-overlap attribution, and backchannel cleanup.

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tutorbench/dialogue.hpp"

namespace tutorbench {

struct Interval {
    double start_s = 0.0;
    double end_s = 0.0;
    bool operator==(const Interval&) const = default;
};

struct WordSegment {
    std::string track_id;
    std::string text;
    double start_s = 0.0;
    double end_s = 0.0;
};

// Sorted, non-overlapping, non-adjacent intervals where one track is
// actively speaking.
struct ActivityMask {
    std::string track_id;
    std::vector<Interval> intervals;
};

struct RawUtterance {
    std::string text;
    double start_s = 0.0;
    double end_s = 0.0;
};

struct TrackAssignment {
    std::string student_track;
    std::string tutor_track;
};

// Union of segment intervals with gaps <= merge_gap_s bridged.
inline ActivityMask build_activity_mask(std::span<const WordSegment> segments,
                                        double merge_gap_s) {
    if (segments.empty())
        throw std::invalid_argument("build_activity_mask: empty segment list");
    if (merge_gap_s < 0.0)
        throw std::invalid_argument("build_activity_mask: merge_gap_s < 0");
    ActivityMask mask;
    mask.track_id = segments.front().track_id;
    std::vector<Interval> ivs;
    for (const auto& seg : segments) {
        if (seg.track_id != mask.track_id)
            throw std::invalid_argument(
                "build_activity_mask: mixed track ids \"" + mask.track_id +
                "\" and \"" + seg.track_id + "\"");
        if (seg.start_s < 0.0 || seg.end_s < seg.start_s)
            throw std::invalid_argument(
                "build_activity_mask: segment with invalid timestamps");
        ivs.push_back({seg.start_s, seg.end_s});
    }
    std::sort(ivs.begin(), ivs.end(), [](const Interval& a, const Interval& b) {
        return a.start_s < b.start_s ||
               (a.start_s == b.start_s && a.end_s < b.end_s);
    });
    for (const Interval& iv : ivs) {
        if (!mask.intervals.empty() &&
            iv.start_s - mask.intervals.back().end_s <= merge_gap_s) {
            mask.intervals.back().end_s =
                std::max(mask.intervals.back().end_s, iv.end_s);
        } else {
            mask.intervals.push_back(iv);
        }
    }
    return mask;
}

struct TrimOffsets {
    double lead_s = 0.0;
    double trail_s = 0.0;
};

// lead = earliest activity across masks, trail = latest; downstream
// timestamps are reported relative to lead_s.
inline TrimOffsets compute_trim_offsets(std::span<const ActivityMask> masks) {
    bool any = false;
    TrimOffsets t{0.0, 0.0};
    for (const auto& m : masks) {
        if (m.intervals.empty()) continue;
        if (!any) {
            t.lead_s = m.intervals.front().start_s;
            t.trail_s = m.intervals.back().end_s;
            any = true;
        } else {
            t.lead_s = std::min(t.lead_s, m.intervals.front().start_s);
            t.trail_s = std::max(t.trail_s, m.intervals.back().end_s);
        }
    }
    if (!any)
        throw std::invalid_argument("compute_trim_offsets: all masks empty");
    return t;
}

struct SpeakerOverlap {
    Speaker speaker = Speaker::Tutor;
    double overlap_s = 0.0;
};

class UnattributableError : public std::runtime_error {
  public:
    UnattributableError(RawUtterance u, const std::string& what)
        : std::runtime_error(what), utterance(std::move(u)) {}
    RawUtterance utterance;
};

namespace detail {

inline double total_overlap(const RawUtterance& u, const ActivityMask& m) {
    double sum = 0.0;
    for (const Interval& iv : m.intervals)
        sum += std::max(0.0, std::min(u.end_s, iv.end_s) -
                                 std::max(u.start_s, iv.start_s));
    return sum;
}

// Earliest start among intervals that positively overlap the utterance.
inline double first_overlap_start(const RawUtterance& u, const ActivityMask& m) {
    for (const Interval& iv : m.intervals) {
        if (std::min(u.end_s, iv.end_s) - std::max(u.start_s, iv.start_s) > 0.0)
            return iv.start_s;
    }
    return std::numeric_limits<double>::infinity();
}

struct BoundaryDistance {
    double gap = std::numeric_limits<double>::infinity();
    double boundary = std::numeric_limits<double>::infinity();
};

inline BoundaryDistance nearest_boundary(const RawUtterance& u,
                                         const ActivityMask& m) {
    BoundaryDistance best;
    for (const Interval& iv : m.intervals) {
        double gap, boundary;
        if (iv.end_s <= u.start_s) {
            gap = u.start_s - iv.end_s;
            boundary = iv.end_s;
        } else if (iv.start_s >= u.end_s) {
            gap = iv.start_s - u.end_s;
            boundary = iv.start_s;
        } else {
            gap = 0.0;
            boundary = iv.start_s;
        }
        if (gap < best.gap || (gap == best.gap && boundary < best.boundary))
            best = {gap, boundary};
    }
    return best;
}

inline const ActivityMask& mask_for_track(std::span<const ActivityMask> masks,
                                          const std::string& track) {
    for (const auto& m : masks)
        if (m.track_id == track) return m;
    throw std::invalid_argument("no activity mask for track \"" + track + "\"");
}

}  // namespace detail

// Attributes the utterance to the speaker whose mask has the greatest
// total overlap with it. Equal nonzero overlaps go to the speaker whose
// overlapping interval starts earlier (tutor on an exact tie). At zero
// overlap the nearest mask boundary within fallback_window_s decides,
// ties broken toward the earlier boundary. Returns nullopt (with a
// reason) when no boundary is in reach.
inline std::optional<SpeakerOverlap> try_attribute_speaker(
    const RawUtterance& u, std::span<const ActivityMask> masks,
    const TrackAssignment& assignment, double fallback_window_s,
    std::string* reason = nullptr) {
    const ActivityMask& tutor_mask =
        detail::mask_for_track(masks, assignment.tutor_track);
    const ActivityMask& student_mask =
        detail::mask_for_track(masks, assignment.student_track);
    double ot = detail::total_overlap(u, tutor_mask);
    double os = detail::total_overlap(u, student_mask);
    if (ot > os) return SpeakerOverlap{Speaker::Tutor, ot};
    if (os > ot) return SpeakerOverlap{Speaker::Student, os};
    if (ot > 0.0) {
        double ft = detail::first_overlap_start(u, tutor_mask);
        double fs = detail::first_overlap_start(u, student_mask);
        return SpeakerOverlap{fs < ft ? Speaker::Student : Speaker::Tutor, ot};
    }
    auto bt = detail::nearest_boundary(u, tutor_mask);
    auto bs = detail::nearest_boundary(u, student_mask);
    bool tutor_ok = bt.gap <= fallback_window_s;
    bool student_ok = bs.gap <= fallback_window_s;
    if (tutor_ok || student_ok) {
        Speaker sp;
        if (tutor_ok && student_ok) {
            if (bt.gap != bs.gap)
                sp = bt.gap < bs.gap ? Speaker::Tutor : Speaker::Student;
            else
                sp = bs.boundary < bt.boundary ? Speaker::Student
                                               : Speaker::Tutor;
        } else {
            sp = tutor_ok ? Speaker::Tutor : Speaker::Student;
        }
        return SpeakerOverlap{sp, 0.0};
    }
    if (reason)
        *reason = "zero overlap with both masks and no boundary within " +
                  std::to_string(fallback_window_s) + " s";
    return std::nullopt;
}

inline SpeakerOverlap attribute_speaker(const RawUtterance& u,
                                        std::span<const ActivityMask> masks,
                                        const TrackAssignment& assignment,
                                        double fallback_window_s) {
    std::string reason;
    auto r = try_attribute_speaker(u, masks, assignment, fallback_window_s,
                                   &reason);
    if (!r) throw UnattributableError(u, reason);
    return *r;
}

struct UnattributedUtterance {
    RawUtterance utterance;
    std::string reason;
};

struct DiarizeOptions {
    double fallback_window_s = 2.0;
    // subtracted from utterance timestamps (silence trim), clamped at 0
    double time_origin_s = 0.0;
    std::string dialogue_id = "session";
    Provenance provenance = Provenance::HumanHuman;
};

struct DiarizeResult {
    Dialogue dialogue;
    std::vector<UnattributedUtterance> unattributed;
};

// Attributes each utterance, then merges consecutive same-speaker
// turns. Unattributable utterances land in the side report rather than
// being silently dropped, so total word content is conserved.
inline DiarizeResult diarize(std::span<const RawUtterance> utterances,
                             std::span<const ActivityMask> masks,
                             const TrackAssignment& assignment,
                             const DiarizeOptions& opts = {}) {
    for (std::size_t i = 1; i < utterances.size(); ++i)
        if (utterances[i].start_s < utterances[i - 1].start_s)
            throw std::invalid_argument(
                "diarize: utterances must be sorted by start_s");
    DiarizeResult result;
    result.dialogue.id = opts.dialogue_id;
    result.dialogue.provenance = opts.provenance;
    for (const RawUtterance& u : utterances) {
        std::string reason;
        auto attr = try_attribute_speaker(u, masks, assignment,
                                          opts.fallback_window_s, &reason);
        if (!attr) {
            result.unattributed.push_back({u, reason});
            continue;
        }
        Turn t;
        t.speaker = attr->speaker;
        t.text = u.text;
        t.start_s = std::max(0.0, u.start_s - opts.time_origin_s);
        t.end_s = std::max(0.0, u.end_s - opts.time_origin_s);
        t.index = static_cast<int>(result.dialogue.turns.size());
        result.dialogue.turns.push_back(std::move(t));
    }
    result.dialogue = merge_consecutive_turns(result.dialogue);
    return result;
}

inline const std::set<std::string>& default_backchannel_lexicon() {
    static const std::set<std::string> lex{
        "yeah", "yep",    "yes",    "ok",     "okay", "mhm",
        "mm-hmm", "uh-huh", "gotcha", "right",  "sure", "cool"};
    return lex;
}

namespace detail {

inline std::string normalize_backchannel(std::string_view text) {
    std::string s;
    s.reserve(text.size());
    for (char c : text) s += static_cast<char>(std::tolower(
        static_cast<unsigned char>(c)));
    auto is_strip = [](char c) {
        return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' ||
               c == ':' || c == ' ' || c == '\t';
    };
    std::size_t b = 0, e = s.size();
    while (b < e && is_strip(s[b])) ++b;
    while (e > b && is_strip(s[e - 1])) --e;
    return s.substr(b, e - b);
}

}  // namespace detail

// Drops short listener interjections whose whole (normalized) text is
// in the lexicon, then re-merges so the interrupted speaker's flow
// rejoins. Retained turns are never altered.
inline Dialogue remove_backchannels(const Dialogue& d,
                                    const std::set<std::string>& lexicon,
                                    int max_words) {
    Dialogue out;
    out.id = d.id;
    out.provenance = d.provenance;
    out.metadata = d.metadata;
    std::set<std::string> normalized;
    for (const auto& phrase : lexicon)
        normalized.insert(detail::normalize_backchannel(phrase));
    for (const Turn& t : d.turns) {
        if (word_count(t.text) <= max_words &&
            normalized.count(detail::normalize_backchannel(t.text)))
            continue;
        out.turns.push_back(t);
    }
    return merge_consecutive_turns(out);
}

// Hook for LLM-based cleaning (grammar, anonymization, coherence).
// Takes the serialized dialogue document embedded in the caller's
// prompt and must return a full dialogue document. Disabled unless the
// caller supplies both the callable and a prompt template containing
// the {dialogue} placeholder; no prompt ships with the harness.
using CleanerFn = std::function<std::string(const std::string& prompt)>;

inline Dialogue apply_cleaner_agent(const Dialogue& d, const CleanerFn& cleaner,
                                    const std::string& prompt_template) {
    std::string prompt = prompt_template;
    const std::string placeholder = "{dialogue}";
    auto pos = prompt.find(placeholder);
    if (pos == std::string::npos)
        throw std::invalid_argument(
            "cleaner prompt template lacks {dialogue} placeholder");
    prompt.replace(pos, placeholder.size(), serialize_dialogue(d));
    return parse_dialogue(cleaner(prompt));
}

// --- segment / assignment / report file formats ---

// Segment file: line-delimited JSON
// {"track": string, "text": string, "start_s": number, "end_s": number}
inline std::vector<WordSegment> parse_segments(std::string_view bytes) {
    using nlohmann::json;
    std::vector<WordSegment> out;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= bytes.size()) {
        std::size_t nl = bytes.find('\n', pos);
        std::string_view line = bytes.substr(
            pos, nl == std::string_view::npos ? bytes.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? bytes.size() + 1 : nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            if (nl == std::string_view::npos) break;
            continue;
        }
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw ParseError(line_no, "malformed segment line");
        WordSegment s;
        if (!j.contains("track") || !j["track"].is_string())
            throw ParseError(line_no, "segment missing string field \"track\"");
        s.track_id = j["track"].get<std::string>();
        if (!j.contains("text") || !j["text"].is_string())
            throw ParseError(line_no, "segment missing string field \"text\"");
        s.text = j["text"].get<std::string>();
        if (!j.contains("start_s") || !j["start_s"].is_number() ||
            !j.contains("end_s") || !j["end_s"].is_number())
            throw ParseError(line_no, "segment missing numeric timestamps");
        s.start_s = j["start_s"].get<double>();
        s.end_s = j["end_s"].get<double>();
        if (s.start_s < 0.0 || s.end_s < s.start_s)
            throw ParseError(line_no, "segment timestamps out of order");
        out.push_back(std::move(s));
        if (nl == std::string_view::npos) break;
    }
    return out;
}

// Utterance file: line-delimited JSON
// {"text": string, "start_s": number, "end_s": number}
inline std::vector<RawUtterance> parse_utterances(std::string_view bytes) {
    using nlohmann::json;
    std::vector<RawUtterance> out;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= bytes.size()) {
        std::size_t nl = bytes.find('\n', pos);
        std::string_view line = bytes.substr(
            pos, nl == std::string_view::npos ? bytes.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? bytes.size() + 1 : nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            if (nl == std::string_view::npos) break;
            continue;
        }
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw ParseError(line_no, "malformed utterance line");
        RawUtterance u;
        if (!j.contains("text") || !j["text"].is_string())
            throw ParseError(line_no, "utterance missing string field \"text\"");
        u.text = j["text"].get<std::string>();
        if (is_blank(u.text))
            throw ParseError(line_no, "utterance text is empty");
        if (!j.contains("start_s") || !j["start_s"].is_number() ||
            !j.contains("end_s") || !j["end_s"].is_number())
            throw ParseError(line_no, "utterance missing numeric timestamps");
        u.start_s = j["start_s"].get<double>();
        u.end_s = j["end_s"].get<double>();
        if (u.start_s < 0.0 || u.end_s < u.start_s)
            throw ParseError(line_no, "utterance timestamps out of order");
        out.push_back(std::move(u));
        if (nl == std::string_view::npos) break;
    }
    return out;
}

// Track-assignment file: {"student": track_id, "tutor": track_id}
inline TrackAssignment parse_track_assignment(std::string_view bytes) {
    using nlohmann::json;
    json j = json::parse(bytes, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ParseError(1, "malformed track assignment");
    if (!j.contains("student") || !j["student"].is_string() ||
        !j.contains("tutor") || !j["tutor"].is_string())
        throw ParseError(1,
                         "track assignment needs string fields "
                         "\"student\" and \"tutor\"");
    TrackAssignment a;
    a.student_track = j["student"].get<std::string>();
    a.tutor_track = j["tutor"].get<std::string>();
    if (a.student_track == a.tutor_track)
        throw ParseError(1, "student and tutor map to the same track");
    return a;
}

inline std::string serialize_unattributed(
    std::span<const UnattributedUtterance> items) {
    using nlohmann::json;
    std::string out;
    for (const auto& item : items) {
        json j;
        j["text"] = item.utterance.text;
        j["start_s"] = item.utterance.start_s;
        j["end_s"] = item.utterance.end_s;
        j["reason"] = item.reason;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace tutorbench
