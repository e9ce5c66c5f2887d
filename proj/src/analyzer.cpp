#include "pxp/analyzer.hpp"

#include "pxp/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace pxp {

namespace {

bool any_of_tag(const std::vector<Tag>& tags, Tag wanted) {
    return std::find(tags.begin(), tags.end(), wanted) != tags.end();
}

AgentVerdict verdict_for(const std::vector<Tag>& tags) {
    return AgentVerdict{is_one_way(tags), is_strong(tags), is_ultra_strong(tags)};
}

// Tags sent by `agent` in messages 1..limit, INIT excluded.
std::vector<Tag> tags_up_to(const Transcript& transcript, std::string_view agent, int limit) {
    std::vector<Tag> out;
    for (const auto& record : transcript.messages) {
        if (record.msg_number > limit) break;
        if (record.sender == agent && record.payload.tag != Tag::init) out.push_back(record.payload.tag);
    }
    return out;
}

int longest(const std::vector<Transcript>& transcripts, int min_length) {
    int length = std::max(min_length, 0);
    for (const auto& t : transcripts) length = std::max(length, static_cast<int>(t.messages.size()));
    return length;
}

std::string cell(int count, double proportion) {
    char buffer[48];
    std::snprintf(buffer, sizeof buffer, "%d (%.2f)", count, proportion);
    return buffer;
}

template <typename T>
CurveBand band(const std::vector<std::vector<T>>& curves) {
    CurveBand out;
    std::size_t length = 0;
    for (const auto& c : curves) length = std::max(length, c.size());
    for (std::size_t i = 0; i < length; ++i) {
        std::vector<double> column;
        for (const auto& c : curves) {
            if (c.empty()) continue;
            // Shorter curves carry their last value forward.
            column.push_back(static_cast<double>(i < c.size() ? c[i] : c.back()));
        }
        if (column.empty()) continue;
        out.median.push_back(lower_median(column));
        out.low.push_back(*std::min_element(column.begin(), column.end()));
        out.high.push_back(*std::max_element(column.begin(), column.end()));
    }
    return out;
}

nlohmann::ordered_json band_json(const CurveBand& b) {
    return {{"median", b.median}, {"min", b.low}, {"max", b.high}};
}

nlohmann::ordered_json counts_json(const VerdictCounts& c) {
    return {{"total", c.total},
            {"one_way_human", c.one_way_human},
            {"one_way_machine", c.one_way_machine},
            {"two_way", c.two_way},
            {"strong_human", c.strong_human},
            {"strong_machine", c.strong_machine},
            {"ultra_human", c.ultra_human},
            {"ultra_machine", c.ultra_machine}};
}

}  // namespace

TagSequencePair extract_sequences(const Transcript& transcript) {
    validate_transcript(transcript);
    TagSequencePair pair;
    for (const auto& record : transcript.messages) {
        if (record.payload.tag == Tag::init) continue;
        if (record.sender == machine_id) {
            pair.machine_to_human.push_back(record.payload.tag);
        } else {
            pair.human_to_machine.push_back(record.payload.tag);
        }
    }
    return pair;
}

bool is_one_way(const std::vector<Tag>& tags) {
    return (any_of_tag(tags, Tag::ratify) || any_of_tag(tags, Tag::revise)) && !any_of_tag(tags, Tag::reject);
}

bool is_strong(const std::vector<Tag>& tags) {
    return !tags.empty() &&
           std::all_of(tags.begin(), tags.end(), [](Tag t) { return t == Tag::ratify || t == Tag::revise; });
}

bool is_ultra_strong(const std::vector<Tag>& tags) { return is_strong(tags) && any_of_tag(tags, Tag::revise); }

std::string_view termination_name(Termination t) noexcept {
    switch (t) {
        case Termination::mutual_ratify: return "mutual-ratify";
        case Termination::reject_by_machine: return "reject-by-m";
        case Termination::reject_by_human: return "reject-by-h";
        case Termination::bound: return "bound";
    }
    return "bound";
}

SessionVerdict classify(const TagSequencePair& pair) {
    SessionVerdict verdict;
    verdict.machine = verdict_for(pair.machine_to_human);
    verdict.human = verdict_for(pair.human_to_machine);
    verdict.two_way = verdict.machine.one_way && verdict.human.one_way;
    return verdict;
}

SessionVerdict classify_session(const Transcript& transcript) {
    SessionVerdict verdict = classify(extract_sequences(transcript));
    verdict.length = static_cast<int>(transcript.messages.size());
    if (transcript.messages.empty()) return verdict;
    const MessageRecord& last = transcript.messages.back();
    Tag latest_machine = Tag::init;
    Tag latest_human = Tag::init;
    for (const auto& record : transcript.messages) {
        (record.sender == machine_id ? latest_machine : latest_human) = record.payload.tag;
    }
    if (last.payload.tag == Tag::reject) {
        verdict.terminal = last.sender == machine_id ? Termination::reject_by_machine : Termination::reject_by_human;
    } else if (latest_machine == Tag::ratify && latest_human == Tag::ratify) {
        verdict.terminal = Termination::mutual_ratify;
    } else {
        verdict.terminal = Termination::bound;
    }
    return verdict;
}

VerdictCounts count_verdicts(const std::vector<Transcript>& transcripts) {
    VerdictCounts counts;
    for (const auto& transcript : transcripts) {
        const SessionVerdict v = classify(extract_sequences(transcript));
        ++counts.total;
        counts.one_way_human += v.human.one_way;
        counts.one_way_machine += v.machine.one_way;
        counts.two_way += v.two_way;
        counts.strong_human += v.human.strong;
        counts.strong_machine += v.machine.strong;
        counts.ultra_human += v.human.ultra;
        counts.ultra_machine += v.machine.ultra;
    }
    return counts;
}

std::vector<int> intelligibility_curve(const std::vector<Transcript>& transcripts, Role agent, int min_length) {
    const std::string_view id = agent == Role::machine ? machine_id : human_id;
    const int length = longest(transcripts, min_length);
    std::vector<int> curve(static_cast<std::size_t>(length), 0);
    for (const auto& transcript : transcripts) {
        for (int i = 1; i <= length; ++i) {
            if (is_one_way(tags_up_to(transcript, id, i))) ++curve[static_cast<std::size_t>(i - 1)];
        }
    }
    return curve;
}

std::vector<double> machine_performance_curve(const std::vector<Transcript>& transcripts,
                                              const std::map<std::string, GroundTruth>& truth,
                                              const Matcher& matcher, int min_length) {
    const int length = longest(transcripts, min_length);
    std::vector<int> correct(static_cast<std::size_t>(length), 0);
    int scored = 0;
    for (const auto& transcript : transcripts) {
        auto it = truth.find(transcript.session_id);
        if (it == truth.end()) {
            spdlog::warn("session {} has no ground truth; excluded from machine performance", transcript.session_id);
            continue;
        }
        ++scored;
        std::optional<bool> current;
        std::size_t next = 0;
        for (int i = 1; i <= length; ++i) {
            while (next < transcript.messages.size() && transcript.messages[next].msg_number <= i) {
                const auto& record = transcript.messages[next++];
                if (record.sender == machine_id) current = matcher(record.payload.prediction, it->second.prediction);
            }
            if (current.value_or(false)) ++correct[static_cast<std::size_t>(i - 1)];
        }
    }
    if (scored == 0) return {};
    std::vector<double> curve;
    curve.reserve(correct.size());
    for (int c : correct) curve.push_back(static_cast<double>(c) / scored);
    return curve;
}

RunSummary summarize_run(const std::vector<Transcript>& transcripts, const std::map<std::string, GroundTruth>& truth,
                         const std::map<std::string, std::string>& statuses, const Matcher& matcher, int min_length) {
    RunSummary summary;
    std::vector<Transcript> counted;
    for (const auto& transcript : transcripts) {
        auto it = statuses.find(transcript.session_id);
        const std::string status = it == statuses.end() ? "completed" : it->second;
        if (status == "failed" || status == "abandoned") {
            ++summary.excluded;
        } else if (status != "completed") {
            ++summary.incomplete;
        } else {
            counted.push_back(transcript);
        }
    }
    for (const auto& [id, status] : statuses) {
        if (status == "failed" || status == "abandoned") {
            const bool has_messages = std::any_of(transcripts.begin(), transcripts.end(),
                                                  [&](const Transcript& t) { return t.session_id == id; });
            if (!has_messages) ++summary.excluded;
        }
    }
    summary.counts = count_verdicts(counted);
    summary.curve_human = intelligibility_curve(counted, Role::human, min_length);
    summary.curve_machine = intelligibility_curve(counted, Role::machine, min_length);
    summary.accuracy = machine_performance_curve(counted, truth, matcher, min_length);
    return summary;
}

int lower_median(std::vector<int> values) {
    if (values.empty()) return 0;
    std::sort(values.begin(), values.end());
    return values[(values.size() - 1) / 2];
}

double lower_median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    return values[(values.size() - 1) / 2];
}

double RunReport::proportion(int count) const {
    return median.total == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(median.total);
}

RunReport aggregate_report(const std::vector<RunSummary>& runs) {
    RunReport report;
    report.runs = static_cast<int>(runs.size());
    auto median_of = [&](int VerdictCounts::*field) {
        std::vector<int> values;
        for (const auto& run : runs) values.push_back(run.counts.*field);
        return lower_median(std::move(values));
    };
    report.median.total = median_of(&VerdictCounts::total);
    report.median.one_way_human = median_of(&VerdictCounts::one_way_human);
    report.median.one_way_machine = median_of(&VerdictCounts::one_way_machine);
    report.median.two_way = median_of(&VerdictCounts::two_way);
    report.median.strong_human = median_of(&VerdictCounts::strong_human);
    report.median.strong_machine = median_of(&VerdictCounts::strong_machine);
    report.median.ultra_human = median_of(&VerdictCounts::ultra_human);
    report.median.ultra_machine = median_of(&VerdictCounts::ultra_machine);

    std::vector<std::vector<int>> human, machine;
    std::vector<std::vector<double>> accuracy;
    for (const auto& run : runs) {
        report.per_run.push_back(run.counts);
        report.excluded += run.excluded;
        report.partial = report.partial || run.incomplete > 0;
        human.push_back(run.curve_human);
        machine.push_back(run.curve_machine);
        accuracy.push_back(run.accuracy);
    }
    report.curve_human = band(human);
    report.curve_machine = band(machine);
    report.accuracy = band(accuracy);
    return report;
}

nlohmann::ordered_json report_to_json(const RunReport& report) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    auto row = [&](const char* label, const char* agent, int count) {
        nlohmann::ordered_json r{{"label", label}};
        if (agent) r["agent"] = agent;
        r["count"] = count;
        r["proportion"] = report.proportion(count);
        rows.push_back(std::move(r));
    };
    const VerdictCounts& m = report.median;
    row("1-way intelligible", "human", m.one_way_human);
    row("1-way intelligible", "machine", m.one_way_machine);
    row("2-way intelligible", nullptr, m.two_way);
    row("strong intelligible", "human", m.strong_human);
    row("strong intelligible", "machine", m.strong_machine);
    row("ultra-strong intelligible", "human", m.ultra_human);
    row("ultra-strong intelligible", "machine", m.ultra_machine);

    nlohmann::ordered_json per_run = nlohmann::ordered_json::array();
    for (const auto& counts : report.per_run) per_run.push_back(counts_json(counts));

    return {{"runs", report.runs},
            {"total_sessions", m.total},
            {"partial", report.partial},
            {"excluded_sessions", report.excluded},
            {"aggregation", "lower median across runs"},
            {"median", counts_json(m)},
            {"rows", std::move(rows)},
            {"per_run", std::move(per_run)},
            {"curves",
             {{"human_one_way", band_json(report.curve_human)},
              {"machine_one_way", band_json(report.curve_machine)},
              {"machine_accuracy", band_json(report.accuracy)}}}};
}

std::string render_table(const std::vector<std::pair<std::string, RunReport>>& columns) {
    constexpr int label_width = 26;
    constexpr int agent_width = 9;
    constexpr int column_width = 13;
    std::ostringstream out;
    auto pad = [](std::string text, int width) {
        if (static_cast<int>(text.size()) < width) text.append(static_cast<std::size_t>(width) - text.size(), ' ');
        return text;
    };
    auto line = [&](const std::string& label, const std::string& agent, auto value_of) {
        std::string text = pad(label, label_width) + pad(agent, agent_width);
        for (const auto& [name, report] : columns) text += pad(value_of(report), column_width);
        while (!text.empty() && text.back() == ' ') text.pop_back();
        out << text << '\n';
    };
    auto counted = [](int VerdictCounts::*field) {
        return [field](const RunReport& r) { return cell(r.median.*field, r.proportion(r.median.*field)); };
    };
    line("Count", "", [&](const RunReport& r) {
        for (const auto& [name, report] : columns) {
            if (&report == &r) return name;
        }
        return std::string();
    });
    line("Total sessions", "", [](const RunReport& r) { return std::to_string(r.median.total); });
    line("1-way intelligible", "Human", counted(&VerdictCounts::one_way_human));
    line("sessions for:", "Machine", counted(&VerdictCounts::one_way_machine));
    line("2-way intelligible sessions:", "", counted(&VerdictCounts::two_way));
    line("Strong intelligible", "Human", counted(&VerdictCounts::strong_human));
    line("sessions for:", "Machine", counted(&VerdictCounts::strong_machine));
    line("Ultra-Strong intelligible", "Human", counted(&VerdictCounts::ultra_human));
    line("sessions for:", "Machine", counted(&VerdictCounts::ultra_machine));
    return out.str();
}

std::string curves_csv(const RunReport& report) {
    std::ostringstream out;
    out << "index,human_one_way,human_min,human_max,machine_one_way,machine_min,machine_max,"
           "machine_accuracy,accuracy_min,accuracy_max\n";
    const std::size_t length = std::max({report.curve_human.median.size(), report.curve_machine.median.size(),
                                         report.accuracy.median.size()});
    auto at = [](const std::vector<double>& v, std::size_t i) -> std::string {
        if (i >= v.size()) return "";
        std::ostringstream s;
        s << v[i];
        return s.str();
    };
    for (std::size_t i = 0; i < length; ++i) {
        out << (i + 1) << ',' << at(report.curve_human.median, i) << ',' << at(report.curve_human.low, i) << ','
            << at(report.curve_human.high, i) << ',' << at(report.curve_machine.median, i) << ','
            << at(report.curve_machine.low, i) << ',' << at(report.curve_machine.high, i) << ','
            << at(report.accuracy.median, i) << ',' << at(report.accuracy.low, i) << ','
            << at(report.accuracy.high, i) << '\n';
    }
    return out.str();
}

}  // namespace pxp
