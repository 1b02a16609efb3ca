#pragma once

// Auditable run traces.
//
// A trace is an ordered list of JSON records:
//
//   {"type":"config",   "seq":0, ...effective run configuration..., "rd":h}
//   {"type":"exchange", "seq":n, role/chunk/prompt/reply/usage,
//                       "memory":"<serialized>", "memory_digest":h', "rd":h}
//   {"type":"warning",  "seq":n, "message":..., "rd":h}
//   {"type":"error",    "seq":n, "message":..., "rd":h}
//   {"type":"summary",  "seq":n, answer/call counts/token totals/wall_ms,
//                       "complete":true, "rd":h}
//
// "rd" is each record's own integrity digest: the SHA-256 of the record
// serialized with sorted keys and the rd field removed. load_trace()
// recomputes and rejects any edited line, so a persisted trace is
// tamper-evident. Exchange records additionally carry the serialized memory
// snapshot taken right after the exchange's effects were applied, plus that
// snapshot's digest.
//
// Everything except the summary's wall_ms is deterministic given a
// deterministic backend; replayed runs therefore produce byte-identical
// trace files once that one field is masked.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "coma/errors.hpp"
#include "coma/llm_client.hpp"
#include "coma/sha256.hpp"

namespace coma {

/// Digest of a record with its own "rd" field excluded. nlohmann objects
/// serialize with sorted keys, so the byte form is canonical.
inline std::string record_digest(const nlohmann::json& rec) {
    nlohmann::json copy = rec;
    copy.erase("rd");
    return sha256_hex(copy.dump());
}

inline void seal_record(nlohmann::json& rec) { rec["rd"] = record_digest(rec); }

inline void verify_record(const nlohmann::json& rec, std::size_t lineno) {
    if (!rec.is_object() || !rec.contains("rd") || !rec["rd"].is_string()) {
        throw TraceIntegrityError("trace record " + std::to_string(lineno) +
                                  " has no integrity digest");
    }
    if (rec["rd"].get<std::string>() != record_digest(rec)) {
        throw TraceIntegrityError("trace record " + std::to_string(lineno) +
                                  " failed digest verification (file was modified?)");
    }
}

/// One logical LLM call as seen by the pipeline, in typed form.
struct ExchangeView {
    std::uint64_t seq = 0;
    RoleTag role = RoleTag::planner;
    int chunk_index = -1;  // -1: not bound to a chunk (plan, synthesize, tc)
    std::string model;
    std::string prompt;
    std::string reply;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    std::uint64_t latency_ms = 0;
    std::string memory_text;
    std::string memory_digest;
};

class RunTrace {
public:
    /// Append a record; assigns the next sequence number and seals it.
    void append(nlohmann::json rec) {
        rec["seq"] = next_seq_++;
        seal_record(rec);
        records_.push_back(std::move(rec));
    }

    /// Rebuild from records that already carry verified digests (loader
    /// path). Records are kept byte-identical; appends continue after the
    /// highest existing sequence number.
    static RunTrace from_verified(std::vector<nlohmann::json> records) {
        RunTrace t;
        for (const auto& r : records) {
            const auto seq = r.value("seq", std::uint64_t{0});
            if (seq + 1 > t.next_seq_) t.next_seq_ = seq + 1;
        }
        t.records_ = std::move(records);
        return t;
    }

    const std::vector<nlohmann::json>& records() const { return records_; }
    bool empty() const { return records_.empty(); }

    // -- typed convenience views ------------------------------------------

    std::vector<ExchangeView> exchanges() const {
        std::vector<ExchangeView> out;
        for (const auto& r : records_) {
            if (r.value("type", "") != "exchange") continue;
            ExchangeView v;
            v.seq = r.value("seq", std::uint64_t{0});
            if (auto role = role_from_string(r.value("role", ""))) v.role = *role;
            v.chunk_index = r.value("chunk", -1);
            v.model = r.value("model", "");
            v.prompt = r.value("prompt", "");
            v.reply = r.value("reply", "");
            v.prompt_tokens = r.value("prompt_tokens", std::uint64_t{0});
            v.completion_tokens = r.value("completion_tokens", std::uint64_t{0});
            v.latency_ms = r.value("latency_ms", std::uint64_t{0});
            v.memory_text = r.value("memory", "");
            v.memory_digest = r.value("memory_digest", "");
            out.push_back(std::move(v));
        }
        return out;
    }

    std::vector<std::string> warnings() const {
        std::vector<std::string> out;
        for (const auto& r : records_) {
            if (r.value("type", "") == "warning") out.push_back(r.value("message", ""));
        }
        return out;
    }

    std::map<std::string, std::uint64_t> calls_by_role() const {
        std::map<std::string, std::uint64_t> out;
        for (const auto& r : records_) {
            if (r.value("type", "") == "exchange") out[r.value("role", "?")] += 1;
        }
        return out;
    }

    std::uint64_t total_calls() const {
        std::uint64_t n = 0;
        for (const auto& r : records_) {
            if (r.value("type", "") == "exchange") ++n;
        }
        return n;
    }

    std::uint64_t total_prompt_tokens() const {
        std::uint64_t n = 0;
        for (const auto& r : records_) {
            if (r.value("type", "") == "exchange") n += r.value("prompt_tokens", std::uint64_t{0});
        }
        return n;
    }

    std::uint64_t total_completion_tokens() const {
        std::uint64_t n = 0;
        for (const auto& r : records_) {
            if (r.value("type", "") == "exchange") {
                n += r.value("completion_tokens", std::uint64_t{0});
            }
        }
        return n;
    }

    std::uint64_t total_latency_ms() const {
        std::uint64_t n = 0;
        for (const auto& r : records_) {
            if (r.value("type", "") == "exchange") n += r.value("latency_ms", std::uint64_t{0});
        }
        return n;
    }

    const nlohmann::json* config_record() const {
        for (const auto& r : records_) {
            if (r.value("type", "") == "config") return &r;
        }
        return nullptr;
    }

    const nlohmann::json* summary_record() const {
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
            if (it->value("type", "") == "summary") return &*it;
        }
        return nullptr;
    }

    /// A trace is complete iff its summary record marks it so. Partial
    /// traces (aborted runs) never masquerade as finished ones.
    bool complete() const {
        const auto* s = summary_record();
        return s != nullptr && s->value("complete", false);
    }

    std::string final_answer() const {
        const auto* s = summary_record();
        return s ? s->value("answer", "") : std::string();
    }

private:
    std::vector<nlohmann::json> records_;
    std::uint64_t next_seq_ = 0;
};

inline void persist_trace(const RunTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write trace file: " + path);
    for (const auto& rec : trace.records()) out << rec.dump() << '\n';
    out.flush();
    if (!out) throw ConfigError("short write persisting trace: " + path);
}

/// Load and verify a persisted trace. Every record's integrity digest must
/// check out; sequence numbers must be present.
inline RunTrace load_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open trace file: " + path);
    std::string line;
    std::size_t lineno = 0;
    std::vector<nlohmann::json> records;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded()) {
            throw TraceIntegrityError("trace line " + std::to_string(lineno) +
                                      " is not valid JSON");
        }
        verify_record(rec, lineno);
        records.push_back(std::move(rec));
    }
    return RunTrace::from_verified(std::move(records));
}

}  // namespace coma
