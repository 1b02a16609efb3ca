#pragma once

// Umbrella header for the whole library.

#include "coma/agents.hpp"
#include "coma/bench.hpp"
#include "coma/chunking.hpp"
#include "coma/cli.hpp"
#include "coma/config.hpp"
#include "coma/errors.hpp"
#include "coma/eval.hpp"
#include "coma/llm_client.hpp"
#include "coma/memory.hpp"
#include "coma/memory_io.hpp"
#include "coma/pipeline.hpp"
#include "coma/prompts.hpp"
#include "coma/sha256.hpp"
#include "coma/tokenizer.hpp"
#include "coma/trace.hpp"
