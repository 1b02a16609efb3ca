#pragma once

// Prompt template storage and rendering.
//
// Eight roles ship as data files under prompts/ and as compiled-in copies
// (prompts_builtin.hpp, byte-identical — regenerated by
// tools/gen_prompts_builtin.py). A library starts from the builtins and may
// be overridden per role from a directory, which is how prompt-ablation
// runs swap in edited templates without rebuilding.
//
// Placeholder syntax, as used by the shipped templates:
//   {{name}}              — double-brace slot (query, chunk, memory, …)
//   {TASK_SPECIFIC_INST}  — single-brace slot for the task instruction line
//
// render() substitutes in one pass over the template; substituted values are
// never re-scanned, so memory or document content containing braces cannot
// inject or leave phantom slots. An unbound {{name}} in a template is an
// error — every slot must be filled at render time.

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "coma/errors.hpp"
#include "coma/prompts_builtin.hpp"
#include "coma/sha256.hpp"

namespace coma {

inline constexpr std::string_view kTaskInstSlot = "{TASK_SPECIFIC_INST}";

inline constexpr std::array<std::string_view, 8> kPromptNames{
    "planner", "extract", "infer", "refine", "manager",
    "coa_worker", "coa_manager", "tc_direct"};

using PromptVars = std::map<std::string, std::string, std::less<>>;

/// Substitute placeholders in a template body. Throws PromptError on a
/// double-brace slot with no binding; single braces other than the exact
/// task-instruction slot pass through verbatim.
inline std::string render_prompt(std::string_view body, const PromptVars& vars) {
    std::string out;
    out.reserve(body.size() + 256);
    std::size_t i = 0;
    const std::size_t n = body.size();
    while (i < n) {
        const char c = body[i];
        if (c == '{' && i + 1 < n && body[i + 1] == '{') {
            const std::size_t close = body.find("}}", i + 2);
            if (close == std::string_view::npos) {
                throw PromptError("unterminated placeholder near byte " + std::to_string(i));
            }
            const std::string_view name = body.substr(i + 2, close - (i + 2));
            auto it = vars.find(name);
            if (it == vars.end()) {
                throw PromptError("unbound placeholder {{" + std::string(name) + "}}");
            }
            out.append(it->second);
            i = close + 2;
            continue;
        }
        if (c == '{' && body.substr(i, kTaskInstSlot.size()) == kTaskInstSlot) {
            auto it = vars.find("TASK_SPECIFIC_INST");
            if (it == vars.end()) {
                throw PromptError("unbound placeholder {TASK_SPECIFIC_INST}");
            }
            out.append(it->second);
            i += kTaskInstSlot.size();
            continue;
        }
        out.push_back(c);
        ++i;
    }
    return out;
}

class PromptLibrary {
public:
    /// Library preloaded with the compiled-in templates.
    static PromptLibrary builtin() {
        PromptLibrary lib;
        lib.bodies_["planner"] = std::string(builtin_prompts::k_planner);
        lib.bodies_["extract"] = std::string(builtin_prompts::k_extract);
        lib.bodies_["infer"] = std::string(builtin_prompts::k_infer);
        lib.bodies_["refine"] = std::string(builtin_prompts::k_refine);
        lib.bodies_["manager"] = std::string(builtin_prompts::k_manager);
        lib.bodies_["coa_worker"] = std::string(builtin_prompts::k_coa_worker);
        lib.bodies_["coa_manager"] = std::string(builtin_prompts::k_coa_manager);
        lib.bodies_["tc_direct"] = std::string(builtin_prompts::k_tc_direct);
        return lib;
    }

    /// Override any role whose file <dir>/<name>.txt exists. Files are read
    /// byte-for-byte (no newline translation, no trimming).
    void load_dir(const std::filesystem::path& dir) {
        if (!std::filesystem::is_directory(dir)) {
            throw PromptError("prompt directory not found: " + dir.string());
        }
        for (const auto name : kPromptNames) {
            const auto file = dir / (std::string(name) + ".txt");
            if (!std::filesystem::exists(file)) continue;
            std::ifstream in(file, std::ios::binary);
            if (!in) throw PromptError("cannot read prompt file: " + file.string());
            std::ostringstream ss;
            ss << in.rdbuf();
            bodies_[std::string(name)] = ss.str();
        }
    }

    const std::string& body(std::string_view name) const {
        auto it = bodies_.find(name);
        if (it == bodies_.end()) {
            throw PromptError("unknown prompt template: " + std::string(name));
        }
        return it->second;
    }

    bool has(std::string_view name) const { return bodies_.count(name) != 0; }

    /// Content hash of one template, used to pin the shipped bodies in tests
    /// and to stamp the effective templates into run traces.
    std::string digest(std::string_view name) const { return sha256_hex(body(name)); }

    std::string render(std::string_view name, const PromptVars& vars) const {
        return render_prompt(body(name), vars);
    }

private:
    std::map<std::string, std::string, std::less<>> bodies_;
};

}  // namespace coma
