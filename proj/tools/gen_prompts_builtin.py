#!/usr/bin/env python3
"""Regenerate include/coma/prompts_builtin.hpp from the files in prompts/.

Run from the repository root after editing a prompt file:
    python3 tools/gen_prompts_builtin.py
"""

import os

NAMES = [
    "planner",
    "extract",
    "infer",
    "refine",
    "manager",
    "coa_worker",
    "coa_manager",
    "tc_direct",
]

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main() -> None:
    out = [
        "// Generated from the files in prompts/ (tools/gen_prompts_builtin.py); do not edit by hand.",
        "#pragma once",
        "",
        "#include <string_view>",
        "",
        "namespace coma::builtin_prompts {",
        "",
    ]
    for name in NAMES:
        with open(os.path.join(ROOT, "prompts", name + ".txt")) as f:
            content = f.read()
        if ")COMA_PT" in content:
            raise SystemExit(f"{name}.txt contains the raw-string delimiter")
        out.append(
            f'inline constexpr std::string_view k_{name} = R"COMA_PT({content})COMA_PT";'
        )
        out.append("")
    out.append("}  // namespace coma::builtin_prompts")
    with open(os.path.join(ROOT, "include", "coma", "prompts_builtin.hpp"), "w") as f:
        f.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
