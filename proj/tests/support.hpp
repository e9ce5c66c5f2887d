#pragma once

#include "pxp/agents.hpp"
#include "pxp/analyzer.hpp"
#include "pxp/blackboard.hpp"
#include "pxp/orchestrator.hpp"
#include "pxp/protocol.hpp"
#include "pxp/records.hpp"

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace testing {

using pxp::Tag;

// Temp directory removed on scope exit.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("pxp-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Tag decision table, one row per (CatA..D, Changed, j > k), written out
// cell by cell from the procedure's branches.
inline Tag oracle_tag(bool match, bool agree, bool changed, int j, int k) {
    static const std::map<std::tuple<bool, bool, bool, bool>, Tag> table = {
        // match, agree, changed, j > k
        {{true, true, false, false}, Tag::ratify},   {{true, true, false, true}, Tag::ratify},
        {{true, true, true, false}, Tag::ratify},    {{true, true, true, true}, Tag::ratify},
        {{true, false, false, false}, Tag::refute},  {{true, false, false, true}, Tag::refute},
        {{true, false, true, false}, Tag::revise},   {{true, false, true, true}, Tag::revise},
        {{false, true, false, false}, Tag::refute},  {{false, true, false, true}, Tag::refute},
        {{false, true, true, false}, Tag::revise},   {{false, true, true, true}, Tag::revise},
        {{false, false, false, false}, Tag::refute}, {{false, false, false, true}, Tag::reject},
        {{false, false, true, false}, Tag::revise},  {{false, false, true, true}, Tag::reject},
    };
    return table.at({match, agree, changed, j > k});
}

// Clause-by-clause definition checker over a tag sequence.
struct OracleVerdict {
    bool one_way, strong, ultra;
};

inline OracleVerdict oracle_verdict(const std::vector<Tag>& t) {
    bool has_positive = false;
    for (Tag x : t) has_positive = has_positive || x == Tag::ratify || x == Tag::revise;
    bool has_reject = false;
    for (Tag x : t) has_reject = has_reject || x == Tag::reject;
    bool all_positive = !t.empty();
    for (Tag x : t) all_positive = all_positive && (x == Tag::ratify || x == Tag::revise);
    bool has_revise = false;
    for (Tag x : t) has_revise = has_revise || x == Tag::revise;
    return {has_positive && !has_reject, all_positive, all_positive && has_revise};
}

inline pxp::MessageRecord message(const std::string& s, int j, Tag tag, std::string y, std::string e) {
    pxp::MessageRecord m;
    m.session_id = s;
    m.msg_number = j;
    m.sender = j % 2 == 1 ? "m" : "h";
    m.receiver = j % 2 == 1 ? "h" : "m";
    m.payload = {tag, std::move(y), std::move(e)};
    m.timestamp = "2024-01-01T00:00:00.000Z";
    return m;
}

// Transcript from a tag list (first tag must be INIT); payload text is filler.
inline pxp::Transcript transcript_of(const std::string& s, const std::vector<Tag>& tags) {
    pxp::Transcript t{s, {}};
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const int j = static_cast<int>(i) + 1;
        t.messages.push_back(message(s, j, tags[i], "y" + std::to_string(j), "e" + std::to_string(j)));
    }
    return t;
}

// Interleaves per-agent tag lists after INIT: h1, m1, h2, m2, ...
inline pxp::Transcript interleaved(const std::string& s, const std::vector<Tag>& human,
                                   const std::vector<Tag>& machine) {
    std::vector<Tag> tags{Tag::init};
    for (std::size_t i = 0; i < std::max(human.size(), machine.size()); ++i) {
        if (i < human.size()) tags.push_back(human[i]);
        if (i < machine.size()) tags.push_back(machine[i]);
    }
    return transcript_of(s, tags);
}

// Linear-scan curve: sessions whose tags from `sender` in messages 1..i are
// one-way intelligible (by the oracle); shorter sessions keep their final
// state.
inline std::vector<int> oracle_curve(const std::vector<pxp::Transcript>& ts, const std::string& sender,
                                     int length) {
    std::vector<int> out;
    for (int i = 1; i <= length; ++i) {
        int count = 0;
        for (const auto& t : ts) {
            std::vector<Tag> tags;
            for (const auto& m : t.messages) {
                if (m.msg_number <= i && m.sender == sender && m.payload.tag != Tag::init) tags.push_back(m.payload.tag);
            }
            count += oracle_verdict(tags).one_way ? 1 : 0;
        }
        out.push_back(count);
    }
    return out;
}

inline pxp::DataRow text_row(const std::string& s, const std::string& x, const std::string& y = {},
                             const std::string& e = {}) {
    pxp::DataRow row{s, {pxp::InstanceKind::text, x}, std::nullopt};
    if (!y.empty()) row.truth = pxp::GroundTruth{y, e};
    return row;
}

inline std::string data_jsonl(int count, const std::string& y = "pneumonia",
                              const std::string& e = "right lower lobe consolidation") {
    std::string out;
    for (int i = 1; i <= count; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "x%02d", i);
        out += pxp::encode_data_row(text_row(id, std::string("case ") + id, y, e)) + "\n";
    }
    return out;
}

// Participant answering through a callback.
inline pxp::Participant scripted(pxp::Role role, pxp::ScriptedAgent::Script script) {
    pxp::Participant p;
    p.role = role;
    p.behavior = std::make_shared<pxp::ScriptedAgent>(std::move(script));
    return p;
}

inline pxp::Participant constant(pxp::Role role, std::string y, std::string e) {
    return scripted(role, [y, e](const pxp::AgentRequest&) { return pxp::AgentResponse{y, e, std::nullopt}; });
}

inline std::vector<Tag> tags_of(const std::vector<pxp::MessageRecord>& messages) {
    std::vector<Tag> out;
    for (const auto& m : messages) out.push_back(m.payload.tag);
    return out;
}

inline std::string tags_text(const std::vector<Tag>& tags) {
    std::string out;
    for (Tag t : tags) out += (out.empty() ? "" : " ") + std::string(pxp::tag_name(t));
    return out;
}

}  // namespace testing
