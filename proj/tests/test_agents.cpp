#include "support.hpp"

#include "pxp/agents.hpp"
#include "pxp/error.hpp"

#include <doctest.h>

#include <random>

using namespace testing;

namespace {

const std::string drug_query = "Is the molecule a likely inhibitor of the target? Give a yes/no prediction.";
const std::string aspirin = "CC(=O)Oc1ccccc1C(=O)O";

std::string chomp(std::string s) {
    while (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

pxp::Blackboard& seeded(pxp::Blackboard& board, const std::string& s, const std::string& x = "case") {
    board.insert_data(text_row(s, x, "pneumonia", "consolidation"));
    return board;
}

void persist(pxp::Blackboard& board, const std::string& s, int j, const pxp::Payload& p) {
    board.insert_message(message(s, j, p.tag, p.prediction, p.explanation));
}

}  // namespace

TEST_CASE("scripted sequences follow the agent's own turn count") {
    auto agent = pxp::ScriptedAgent::sequence({{"a", "1"}, {"b", "2"}}, {{"x07", {{"z", "9"}}}});
    const auto row = text_row("run-r01:x01", "case");
    const pxp::Context ctx;
    CHECK(pxp::ask_agent("", row, *agent, ctx, "run-r01:x01", 1).prediction == "a");
    CHECK(pxp::ask_agent("", row, *agent, ctx, "run-r01:x01", 3).prediction == "b");
    CHECK(pxp::ask_agent("", row, *agent, ctx, "run-r01:x01", 9).prediction == "b");
    CHECK(pxp::ask_agent("", row, *agent, ctx, "run-r01:x01", 2).prediction == "a");
    const auto other = text_row("run-r01:x07", "case");
    CHECK(pxp::ask_agent("", other, *agent, ctx, "run-r01:x07", 5).prediction == "z");
    CHECK_THROWS_AS(pxp::ScriptedAgent::sequence({}), pxp::Error);
}

TEST_CASE("echo and proxy agents") {
    const auto row = text_row("s", "case", "truth-y", "truth-e");
    auto echo = pxp::ScriptedAgent::echo();
    CHECK(pxp::ask_agent("", row, *echo, {}).prediction == "truth-y");
    const pxp::Context ctx{{1, "m", {Tag::init, "p", "q"}}};
    const auto r = pxp::ask_agent("", row, *echo, ctx);
    CHECK(r.prediction == "p");
    CHECK(r.explanation == "q");

    pxp::ProxyHumanAgent proxy;
    for (int j = 2; j <= 10; j += 2) {
        const auto a = pxp::ask_agent("", row, proxy, ctx, "s", j);
        CHECK(a.prediction == "truth-y");
        CHECK(a.explanation == "truth-e");
        CHECK_FALSE(a.supplied_tag);
    }
    CHECK_THROWS_AS(pxp::ask_agent("", text_row("s", "case"), proxy, ctx), pxp::Error);
}

TEST_CASE("prompt assembly") {
    const auto row = text_row("s", aspirin);
    const pxp::Context ctx{
        {1, "m", {Tag::init, "yes", "the acetyl ester can acylate a serine in the active site"}},
        {2, "h", {Tag::refute, "no", "the carboxylic acid is charged at physiological pH and will not reach the pocket"}}};
    const auto prompt = pxp::assemble_prompt(pxp::PromptTemplate::standard(), drug_query, row, ctx);
    CHECK(prompt.user == chomp(read_file(std::string(PXP_TEST_DATA) + "/prompt_machine_m3.txt")));
    CHECK(prompt.system.find("PREDICTION:") != std::string::npos);
    CHECK(prompt.attachments.empty());

    const auto first = pxp::assemble_prompt(pxp::PromptTemplate::standard(), drug_query, row, {});
    CHECK(first.user == drug_query + "\n\nCase:\n" + aspirin);

    pxp::DataRow image{"s", {pxp::InstanceKind::image_ref, "/img/cxr1.png"}, std::nullopt};
    const auto attached = pxp::assemble_prompt({"", "{instance}"}, "", image, {});
    CHECK(attached.attachments == std::vector<std::string>{"/img/cxr1.png"});
    CHECK(attached.user == "[attached image 1]");
    CHECK(pxp::assemble_prompt({"", "{instance}"}, "", image, {}, std::string("a chest film")).user == "a chest film");
    CHECK(pxp::assemble_prompt({"", "{x y} {}"}, "", row, {}).user == "{x y} {}");
    CHECK_THROWS_AS(pxp::assemble_prompt({"", "{answer}"}, "", row, {}), pxp::Error);
}

TEST_CASE("structured reply parsing") {
    auto r = pxp::parse_structured_reply("PREDICTION: pneumonia\nEXPLANATION: consolidation in\nthe right lower lobe");
    REQUIRE(r);
    CHECK(r->first == "pneumonia");
    CHECK(r->second == "consolidation in\nthe right lower lobe");
    r = pxp::parse_structured_reply("Sure.\n**Prediction:** no\n**Explanation:** charged acid");
    REQUIRE(r);
    CHECK(r->first == "no");
    CHECK(r->second == "charged acid");
    CHECK_FALSE(pxp::parse_structured_reply("no labels here"));
    CHECK_FALSE(pxp::parse_structured_reply("PREDICTION: x"));
    CHECK_FALSE(pxp::parse_structured_reply("EXPLANATION: e\nPREDICTION: x"));
    CHECK_FALSE(pxp::parse_structured_reply("PREDICTION:\nEXPLANATION: e"));
}

TEST_CASE("LLM agent re-prompts once, then fails with a parse error") {
    auto client = std::make_shared<pxp::FixtureChatClient>(
        nlohmann::json{{"replies", {"I think it is pneumonia.", "PREDICTION: pneumonia\nEXPLANATION: lobar opacity"}}});
    pxp::LlmAgent agent(client, pxp::PromptTemplate::standard(), {300, 0.0, {}});
    const auto row = text_row("s", "chest film");
    const auto r = pxp::ask_agent("q", row, agent, {});
    CHECK(r.prediction == "pneumonia");
    const auto requests = client->requests();
    REQUIRE(requests.size() == 2);
    CHECK(requests[1].messages.size() == 3);
    CHECK(requests[1].messages[1].role == "assistant");
    CHECK(requests[0].max_tokens == 300);

    auto junk = std::make_shared<pxp::FixtureChatClient>(nlohmann::json{{"default", "whatever"}});
    pxp::LlmAgent bad(junk, pxp::PromptTemplate::standard());
    try {
        pxp::ask_agent("q", row, bad, {});
        FAIL("expected parse error");
    } catch (const pxp::Error& e) {
        CHECK(e.code() == pxp::ErrorCode::parse);
    }
    CHECK(junk->call_count() == 2);

    auto text_only = std::make_shared<pxp::FixtureChatClient>(nlohmann::json{{"default", "x"}}, false);
    pxp::LlmAgent blind(text_only, pxp::PromptTemplate::standard());
    pxp::DataRow image{"s", {pxp::InstanceKind::image_ref, "/img/a.png"}, std::nullopt};
    CHECK_THROWS_AS(pxp::ask_agent("q", image, blind, {}), pxp::Error);
}

TEST_CASE("context update only grows") {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        pxp::Context ctx;
        int j = 1;
        const int steps = 1 + static_cast<int>(rng() % 8);
        for (int step = 0; step < steps; ++step) {
            const pxp::Payload own{j == 1 ? Tag::init : Tag::refute, "y" + std::to_string(j), "e"};
            std::optional<pxp::ContextEntry> incoming;
            if (j > 1) incoming = pxp::ContextEntry{j - 1, "h", {Tag::ratify, "i", "e"}};
            const auto next = pxp::update_context(own, j, "m", ctx, incoming);
            REQUIRE(next.size() >= ctx.size() + 1);
            for (std::size_t i = 0; i < ctx.size(); ++i) CHECK(next[i] == ctx[i]);
            CHECK(next.back().msg_number == j);
            for (std::size_t i = 1; i < next.size(); ++i) CHECK(next[i - 1].msg_number < next[i].msg_number);
            // Replaying an already-held incoming message adds nothing but the own entry.
            if (incoming) CHECK(pxp::update_context(own, j, "m", next, incoming).size() == next.size() + 1);
            ctx = next;
            j += 2;
        }
    }
}

TEST_CASE("agent step produces the protocol's tags and context rows") {
    pxp::Blackboard board;
    const std::string s = "s";
    seeded(board, s);
    auto machine = scripted(pxp::Role::machine, [](const pxp::AgentRequest& r) {
        return r.msg_number == 1 ? pxp::AgentResponse{"effusion", "blunted angle", std::nullopt}
                                 : pxp::AgentResponse{"pneumonia", "consolidation", std::nullopt};
    });
    auto human = constant(pxp::Role::human, "pneumonia", "consolidation");

    const auto m1 = pxp::agent_step(machine, s, 1, 4, board);
    CHECK(m1.tag == Tag::init);
    persist(board, s, 1, m1);
    const auto h2 = pxp::agent_step(human, s, 2, 4, board);
    CHECK(h2.tag == Tag::refute);
    persist(board, s, 2, h2);
    const auto m3 = pxp::agent_step(machine, s, 3, 4, board);
    CHECK(m3.tag == Tag::revise);
    persist(board, s, 3, m3);
    const auto h4 = pxp::agent_step(human, s, 4, 4, board);
    CHECK(h4.tag == Tag::ratify);

    const auto row = board.context(s, 3);
    REQUIRE(row);
    REQUIRE(row->context.size() == 3);
    CHECK(row->context[0].msg_number == 1);
    CHECK(row->context[1].sender == "h");
    CHECK(row->context[2].payload.prediction == "pneumonia");
}

TEST_CASE("agent step sends the golden prompt through the LLM backend") {
    pxp::Blackboard board;
    const std::string s = "drug:x01";
    board.insert_data(text_row(s, aspirin));
    auto client = std::make_shared<pxp::FixtureChatClient>(nlohmann::json{
        {"replies",
         {"PREDICTION: yes\nEXPLANATION: the acetyl ester can acylate a serine in the active site",
          "PREDICTION: no\nEXPLANATION: the charged acid will not reach the pocket"}}});
    pxp::Participant machine;
    machine.role = pxp::Role::machine;
    machine.query = drug_query;
    machine.behavior = std::make_shared<pxp::LlmAgent>(client, pxp::PromptTemplate::standard());
    auto human = constant(pxp::Role::human, "no",
                          "the carboxylic acid is charged at physiological pH and will not reach the pocket");

    persist(board, s, 1, pxp::agent_step(machine, s, 1, 4, board));
    persist(board, s, 2, pxp::agent_step(human, s, 2, 4, board));
    const auto m3 = pxp::agent_step(machine, s, 3, 4, board);
    CHECK(m3.tag == Tag::revise);
    const auto requests = client->requests();
    REQUIRE(requests.size() == 2);
    CHECK(requests[1].messages[0].content == chomp(read_file(std::string(PXP_TEST_DATA) + "/prompt_machine_m3.txt")));
}

TEST_CASE("gated revision keeps the previous answer") {
    pxp::Blackboard board;
    seeded(board, "s");
    struct Never : pxp::RevisionPolicy {
        bool accept_revision(const pxp::Payload&, const pxp::Payload&) override { return false; }
    };
    auto machine = scripted(pxp::Role::machine, [](const pxp::AgentRequest& r) {
        return pxp::AgentResponse{"v" + std::to_string(r.msg_number), "e", std::nullopt};
    });
    machine.revision = std::make_shared<Never>();
    auto human = constant(pxp::Role::human, "other", "x");
    persist(board, "s", 1, pxp::agent_step(machine, "s", 1, 4, board));
    persist(board, "s", 2, pxp::agent_step(human, "s", 2, 4, board));
    const auto m3 = pxp::agent_step(machine, "s", 3, 4, board);
    CHECK(m3.prediction == "v1");
    CHECK(m3.tag == Tag::refute);
}

TEST_CASE("supplied human tags: early REJECT is downgraded, INIT refused") {
    pxp::Blackboard board;
    seeded(board, "s");
    persist(board, "s", 1, {Tag::init, "a", "b"});
    auto rejecting = scripted(pxp::Role::human, [](const pxp::AgentRequest&) {
        return pxp::AgentResponse{"c", "d", Tag::reject};
    });
    CHECK(pxp::agent_step(rejecting, "s", 2, 4, board).tag == Tag::refute);
    auto init = scripted(pxp::Role::human, [](const pxp::AgentRequest&) {
        return pxp::AgentResponse{"c", "d", Tag::init};
    });
    CHECK_THROWS_AS(pxp::agent_step(init, "s", 2, 4, board), pxp::Error);
    CHECK_THROWS_AS(pxp::agent_step(rejecting, "missing", 2, 4, board), pxp::Error);
}
