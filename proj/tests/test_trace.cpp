#include <catch2/catch_amalgamated.hpp>

#include "coma/trace.hpp"

#include "support.hpp"

using namespace coma;
using nlohmann::json;

TEST_CASE("record digests are canonical and exclude the digest field", "[trace]") {
    json a;
    a["type"] = "warning";
    a["message"] = "m";
    a["seq"] = 7;

    json b;
    b["seq"] = 7;
    b["message"] = "m";
    b["type"] = "warning";

    CHECK(record_digest(a) == record_digest(b));  // key order is canonicalized
    CHECK(record_digest(a).size() == 64);

    json sealed = a;
    seal_record(sealed);
    REQUIRE(sealed.contains("rd"));
    CHECK(sealed["rd"] == record_digest(a));  // rd itself is not covered
    CHECK_NOTHROW(verify_record(sealed, 1));

    sealed["message"] = "edited";
    CHECK_THROWS_AS(verify_record(sealed, 1), TraceIntegrityError);
}

TEST_CASE("append numbers and seals records in order", "[trace]") {
    RunTrace t;
    t.append(json{{"type", "config"}, {"method", "coma"}});
    t.append(json{{"type", "warning"}, {"message", "w"}});
    t.append(json{{"type", "summary"}, {"answer", "a"}, {"complete", true}});

    REQUIRE(t.records().size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(t.records()[i]["seq"] == i);
        CHECK_NOTHROW(verify_record(t.records()[i], i + 1));
    }
    CHECK(t.complete());
    CHECK(t.final_answer() == "a");
}

TEST_CASE("persisted traces survive a load byte-compatibly", "[trace]") {
    ts::TempDir dir;
    const std::string path = dir.str("run.jsonl");

    RunTrace t;
    t.append(json{{"type", "config"}, {"method", "tc"}});
    t.append(json{{"type", "exchange"},
                  {"role", "tc_direct"},
                  {"chunk", -1},
                  {"prompt", "p"},
                  {"reply", "r"}});
    t.append(json{{"type", "summary"}, {"answer", "r"}, {"complete", true}});
    persist_trace(t, path);

    const RunTrace back = load_trace(path);
    REQUIRE(back.records().size() == t.records().size());
    for (std::size_t i = 0; i < t.records().size(); ++i) {
        CHECK(back.records()[i].dump() == t.records()[i].dump());
    }

    // Appends to a loaded trace continue the sequence.
    RunTrace more = load_trace(path);
    more.append(json{{"type", "warning"}, {"message", "late"}});
    CHECK(more.records().back()["seq"] == 3);
}

TEST_CASE("any edit to a persisted trace is detected", "[trace]") {
    ts::TempDir dir;
    const std::string path = dir.str("run.jsonl");

    RunTrace t;
    t.append(json{{"type", "summary"}, {"answer", "tamper-target"}, {"complete", true}});
    persist_trace(t, path);

    SECTION("field edit") {
        std::string text = ts::read_file(path);
        const auto pos = text.find("tamper-target");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 13, "tampered-here");
        ts::write_file(path, text);
        CHECK_THROWS_AS(load_trace(path), TraceIntegrityError);
    }
    SECTION("digest stripped") {
        ts::write_file(path, "{\"type\":\"summary\",\"answer\":\"x\"}\n");
        CHECK_THROWS_AS(load_trace(path), TraceIntegrityError);
    }
    SECTION("junk line") {
        std::string text = ts::read_file(path);
        text += "not json at all\n";
        ts::write_file(path, text);
        CHECK_THROWS_AS(load_trace(path), TraceIntegrityError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_trace(dir.str("absent.jsonl")), ConfigError);
    }
}

TEST_CASE("typed views decode exchanges, warnings, and totals", "[trace]") {
    RunTrace t;
    t.append(json{{"type", "config"}, {"method", "coma"}, {"backend", "scripted"}});
    t.append(json{{"type", "exchange"}, {"role", "planner"}, {"chunk", -1},
                  {"model", "m1"}, {"prompt", "p1"}, {"reply", "r1"},
                  {"prompt_tokens", 10}, {"completion_tokens", 2}, {"latency_ms", 5},
                  {"memory", "questions: []\n"}, {"memory_digest", "d1"}});
    t.append(json{{"type", "warning"}, {"message", "something soft"}});
    t.append(json{{"type", "exchange"}, {"role", "extract"}, {"chunk", 0},
                  {"model", "m2"}, {"prompt", "p2"}, {"reply", "r2"},
                  {"prompt_tokens", 30}, {"completion_tokens", 4}, {"latency_ms", 7},
                  {"memory", "gathered_facts: []\n"}, {"memory_digest", "d2"}});
    t.append(json{{"type", "summary"}, {"answer", "fin"}, {"complete", false}});

    const auto ex = t.exchanges();
    REQUIRE(ex.size() == 2);
    CHECK(ex[0].role == RoleTag::planner);
    CHECK(ex[0].chunk_index == -1);
    CHECK(ex[0].model == "m1");
    CHECK(ex[0].prompt == "p1");
    CHECK(ex[0].reply == "r1");
    CHECK(ex[0].memory_text == "questions: []\n");
    CHECK(ex[1].role == RoleTag::extract);
    CHECK(ex[1].chunk_index == 0);
    CHECK(ex[1].seq > ex[0].seq);

    CHECK(t.warnings() == std::vector<std::string>{"something soft"});
    CHECK(t.total_calls() == 2);
    CHECK(t.total_prompt_tokens() == 40);
    CHECK(t.total_completion_tokens() == 6);
    CHECK(t.total_latency_ms() == 12);

    const auto by_role = t.calls_by_role();
    CHECK(by_role.at("planner") == 1);
    CHECK(by_role.at("extract") == 1);

    REQUIRE(t.config_record() != nullptr);
    CHECK((*t.config_record())["backend"] == "scripted");
    REQUIRE(t.summary_record() != nullptr);
    CHECK_FALSE(t.complete());  // summary says incomplete
    CHECK(t.final_answer() == "fin");
}

TEST_CASE("a trace without a summary is incomplete", "[trace]") {
    RunTrace t;
    CHECK_FALSE(t.complete());
    CHECK(t.empty());
    t.append(json{{"type", "config"}});
    CHECK_FALSE(t.complete());
    CHECK(t.final_answer().empty());
}
