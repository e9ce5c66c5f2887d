#pragma once

// Session classification by one-way / two-way / strong / ultra-strong
// intelligibility, per-message curves and aggregation across repetitions.

#include "pxp/comparators.hpp"
#include "pxp/protocol.hpp"
#include "pxp/records.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pxp {

/// Tags sent by each agent, in order, INIT excluded.
struct TagSequencePair {
    std::vector<Tag> machine_to_human;
    std::vector<Tag> human_to_machine;

    friend bool operator==(const TagSequencePair&, const TagSequencePair&) = default;
};

TagSequencePair extract_sequences(const Transcript& transcript);

/// At least one RATIFY or REVISE and no REJECT.
bool is_one_way(const std::vector<Tag>& tags);
/// Non-empty and every tag is RATIFY or REVISE.
bool is_strong(const std::vector<Tag>& tags);
/// Strong with at least one REVISE.
bool is_ultra_strong(const std::vector<Tag>& tags);

struct AgentVerdict {
    bool one_way = false;
    bool strong = false;
    bool ultra = false;

    friend bool operator==(const AgentVerdict&, const AgentVerdict&) = default;
};

enum class Termination { mutual_ratify, reject_by_machine, reject_by_human, bound };

std::string_view termination_name(Termination t) noexcept;

struct SessionVerdict {
    AgentVerdict machine;
    AgentVerdict human;
    bool two_way = false;
    int length = 0;
    Termination terminal = Termination::bound;
};

/// Pure classification of a tag-sequence pair; length/terminal are left default.
SessionVerdict classify(const TagSequencePair& pair);

/// classify() plus length and how the session ended.
SessionVerdict classify_session(const Transcript& transcript);

/// Category counts for one run.
struct VerdictCounts {
    int total = 0;
    int one_way_human = 0;
    int one_way_machine = 0;
    int two_way = 0;
    int strong_human = 0;
    int strong_machine = 0;
    int ultra_human = 0;
    int ultra_machine = 0;

    friend bool operator==(const VerdictCounts&, const VerdictCounts&) = default;
};

VerdictCounts count_verdicts(const std::vector<Transcript>& transcripts);

/// Entry i-1 counts sessions whose tags from `agent` up to message i already
/// make the session one-way intelligible for that agent. Sessions shorter
/// than i contribute their final state. Curve length is max(min_length,
/// longest session).
std::vector<int> intelligibility_curve(const std::vector<Transcript>& transcripts, Role agent, int min_length = 0);

/// Entry i-1 is the fraction of sessions whose latest machine prediction at or
/// before message i matches the truth. Sessions without truth are skipped
/// with a warning; if none remain the curve is empty.
std::vector<double> machine_performance_curve(const std::vector<Transcript>& transcripts,
                                              const std::map<std::string, GroundTruth>& truth,
                                              const Matcher& matcher, int min_length = 0);

/// Everything the report needs from one repetition.
struct RunSummary {
    VerdictCounts counts;
    std::vector<int> curve_human;
    std::vector<int> curve_machine;
    std::vector<double> accuracy;
    int excluded = 0;    ///< failed or abandoned sessions
    int incomplete = 0;  ///< sessions still running
};

/// `statuses` maps session ids to status names; sessions marked failed or
/// abandoned are excluded, running ones counted as incomplete. Sessions absent
/// from the map are treated as completed.
RunSummary summarize_run(const std::vector<Transcript>& transcripts, const std::map<std::string, GroundTruth>& truth,
                         const std::map<std::string, std::string>& statuses = {}, const Matcher& matcher = exact_match,
                         int min_length = 0);

/// Lower median: the element at index (size-1)/2 after sorting.
int lower_median(std::vector<int> values);
double lower_median(std::vector<double> values);

struct CurveBand {
    std::vector<double> median;
    std::vector<double> low;
    std::vector<double> high;
};

struct RunReport {
    int runs = 0;
    VerdictCounts median;  ///< lower median per category, total included
    std::vector<VerdictCounts> per_run;
    CurveBand curve_human;
    CurveBand curve_machine;
    CurveBand accuracy;
    int excluded = 0;
    bool partial = false;

    /// median count / median total, 0 when there are no sessions.
    double proportion(int count) const;
};

RunReport aggregate_report(const std::vector<RunSummary>& runs);

nlohmann::ordered_json report_to_json(const RunReport& report);

/// Plain-text table with the interaction-statistics row labels, one column
/// per report.
std::string render_table(const std::vector<std::pair<std::string, RunReport>>& columns);

/// index,human_one_way,machine_one_way,machine_accuracy (medians), plus
/// min/max columns for error bars.
std::string curves_csv(const RunReport& report);

}  // namespace pxp
