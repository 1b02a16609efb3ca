// Generated from the files in prompts/ (tools/gen_prompts_builtin.py); do not edit by hand.
#pragma once

#include <string_view>

namespace coma::builtin_prompts {

inline constexpr std::string_view k_planner = R"COMA_PT(You are an expert research planner. Your task is to devise an exhaustive research strategy to answer a complex MAIN_QUERY. The goal is not just to find the direct answer, but to generate a set of broad, overlapping "Information Nets" that will reliably catch all the necessary facts, even if they are indirect or their relevance is not immediately obvious.

### The Thought Process

Follow this three-step thinking process to generate your questions:

1.  **Deconstruct the Query:** Identify the core entities, the central event/relationship, and all constraints (temporal, locational, etc.).

2.  **Formulate a Multi-Pronged Strategy:** Based on the deconstruction, define your angles of attack.
    *   **The Direct Approach:** Formulate a question that tracks the direct interaction or causal link between the core components of the query. This is your primary target.
    *   **The Decomposed Approach (Crucial Step):** Assume the direct answer might be incomplete or misleading. To find the full context, investigate each core entity's history *independently* within the query's constraints. This allows you to discover the underlying factors and connections that explain the central event.

3.  **Generate Broad, Far-Reaching Questions:** Convert your strategy into a set of questions. These questions should act as directives for a comprehensive note-taking process.

---
### Example of the Thought Process in Action

**MAIN_QUERY:** "What was the primary reason Project 'Orion' was cancelled following the acquisition of 'Innovate Corp'?"

**1. Deconstruction:**
*   **Core Entities:** `Project 'Orion'`, `'Innovate Corp'`.
*   **Central Event:** `cancelled`.
*   **Constraints:** `following the acquisition` (temporal and potential causal link).

**2. Strategy Formulation:**
*   **Direct Approach:** I need to find the officially stated reason for the cancellation of 'Orion' and see how it connects to the acquisition.
*   **Decomposed Approach:** The official reason might not be the whole story. The real cause lies at the intersection of the two entities' independent histories. I must build a complete picture of both 'Orion' and 'Innovate Corp' leading up to the cancellation.
    *   First, I will research Project 'Orion's' history on its own. What were its goals, budget, progress, and known problems?
    *   Second, I will research 'Innovate Corp'. What technology did they possess? What was the strategic purpose of their acquisition?
    *   By understanding both entities in isolation, I can cross-reference the timelines to uncover the true reason for the cancellation (e.g., 'Innovate Corp's' technology made 'Orion' redundant, the acquisition shifted budget priorities, etc.).

**3. Generate Questions (The "Information Nets"):**
*   (From the Direct Approach) -> "Find all official statements, memos, or post-mortems that explicitly state the reason for Project 'Orion's' cancellation."
*   (From the Decomposed Approach for 'Orion') -> "What is the complete history of Project 'Orion' *before the acquisition*: its stated goals, budget, key personnel, major milestones, and any documented challenges or internal reviews."
*   (From the Decomposed Approach for 'Innovate Corp') -> "what is the core technology and product line of 'Innovate Corp' at the time of its acquisition. What was the stated business strategy behind the acquisition?"
*   (To link the contexts) -> "What organizational changes, budget reallocations, or technology integrations occurred between the teams of Project 'Orion' and 'Innovate Corp' after the acquisition was finalized?"

**MAIN_QUERY:** "Where was the first documented contact between Norse voyagers and the Indigenous peoples of what is now North America?"

**1. Deconstruction:**
*   **Core Entities:** `Norse voyagers`, `Indigenous peoples of North America`.
*   **Central Event:** `first documented contact`.
*   **Constraints:** `where` (location) and `first` (chronology); note ambiguity in what counts as "documented" (Norse texts, Indigenous oral history, or archaeology).

**2. Strategy Formulation:**
*   **Direct Approach:** Locate the earliest explicit records or securely dated artifacts that document an encounter between Norse voyagers and Indigenous peoples.
*   **Decomposed Approach (Two overlapping information nets):**
    *   **Net A — Norse / Euro Records & Material Evidence:** Gather Norse saga passages, contemporaneous chronicles, runic or other inscriptions, and archaeological sites with Norse artifacts in Atlantic/North American regions; extract dates, claimed locations, and any mention of locals.
    *   **Net B — Indigenous Oral Traditions & Local Archaeology:** Compile Indigenous oral histories, place-names, and archaeological reports that describe encounters with outsiders or show foreign artifacts or cultural change; extract dating, locality, and descriptions.
    *   The union of Nets A and B catches earliest "documentation" regardless of genre.

**3. Generate Questions (The "Information Nets"):**
*   (From the Direct Approach) -> "What is the chronologically earliest explicit written accounts or European chronicles claiming Norse contact with Indigenous peoples, with exact quotations and dates."
*   (From Net A) -> "List archaeological sites in Atlantic Canada / nearby with securely dated Norse artifacts; for each, describe dating evidence and whether Indigenous–Norse interaction is evident."
*   (From Net B) -> "Collect Indigenous oral histories and regional archaeological reports that describe early encounters with seafaring outsiders, including dating and locality details."
*   (To link the contexts) -> "For each Norse-dated site or saga reference, is there corresponding Indigenous evidence (oral or archaeological) at the same place/time? For Indigenous-suggested cases, is there any Norse material or European mention nearby?"
*   (Edge cases) -> "Could artifacts be trade items rather than evidence of direct contact? How do radiocarbon and stratigraphic dates constrain 'first' claims?"

---
### YOUR TASK

Now, apply this exact same thought process to the following MAIN_QUERY.

After thinking return this output format:
```yaml
questions:
  - "Broad Question from Direct Approach"
  - "Broad Question from Decomposed Approach (Entity 1)"
  - "Broad Question from Decomposed Approach (Entity 2)"
  # ... and so on
gathered_facts: []
inferred_facts: []
answer: ""
```
MAIN_QUERY: {{query}}
)COMA_PT";

inline constexpr std::string_view k_extract = R"COMA_PT(Respond with YAML format ONLY. Do not use markdown code blocks or any other formatting.

Extract ALL relevant facts from the CONTEXT_CHUNK that could help answer the MAIN_QUERY.
Pay special attention to:
- Named entities (organizations, satellites, technologies, people)
- Relationships between entities (who made what, who operated what)
- Historical connections (what came before what, experimental vs operational)
- Technical specifications and capabilities

Return the complete updated YAML structure with new facts added:

gathered_facts:
  - "new fact from chunk"

MAIN_QUERY: {{query}}
CONTEXT_CHUNK: {{chunk}}
CURRENT_MEMORY:
{{memory}}
)COMA_PT";

inline constexpr std::string_view k_infer = R"COMA_PT(Respond with YAML format ONLY. Do not use markdown code blocks or any other formatting.

Based on the gathered facts, make logical inferences that help answer the MAIN_QUERY.
Look for:
- Connections between entities mentioned in different facts
- Historical relationships (what led to what)
- Organizational relationships (who owns/operates/manufactures what)
- Timeline connections (experimental versions leading to operational versions)

MAIN_QUERY: {{query}}

Return the complete updated YAML structure:

inferred_facts:
  - "existing inferred facts"
  - "new logical inferences"
  
CURRENT_MEMORY:
{{memory}}
)COMA_PT";

inline constexpr std::string_view k_refine = R"COMA_PT(Respond with YAML format ONLY. Do not use markdown code blocks or any other formatting.

Remove answered questions and optionally add new ones.

MAIN_QUERY: {{query}}

Return exactly this YAML structure:

questions:
  - "remaining unanswered questions or newly added questions"

CURRENT_MEMORY:
{{memory}}
)COMA_PT";

inline constexpr std::string_view k_manager = R"COMA_PT(Respond with YAML format ONLY. Do not use markdown code blocks or any other formatting.

Based on the gathered facts and inferences, answer this question: {{query}}

Analysis approach:
1. Identify all relevant entities mentioned in the facts
2. Trace relationships and connections between entities
3. Follow logical chains to reach the final answer
4. Provide a direct, concise answer

{{memory}}

Return exactly this YAML structure:

answer: "concise answer here"
questions: []

{TASK_SPECIFIC_INST}
)COMA_PT";

inline constexpr std::string_view k_coa_worker = R"COMA_PT(You are processing one chunk of a long document to help answer a question.
Read the PREVIOUS_SUMMARY and the SOURCE_TEXT, then write one updated summary
that carries forward everything needed to answer the MAIN_QUERY.

Guidelines:
- Begin with "Summary of the Source Text and Previous Context:".
- Keep every detail from the previous summary that could still matter for the MAIN_QUERY.
- Add the relevant new information found in the SOURCE_TEXT.
- Write plain prose. Do not answer the question yet.

MAIN_QUERY: {{query}}

PREVIOUS_SUMMARY:
{{summary}}

SOURCE_TEXT:
{{chunk}}
)COMA_PT";

inline constexpr std::string_view k_coa_manager = R"COMA_PT(Answer the MAIN_QUERY using only the accumulated summary below.

MAIN_QUERY: {{query}}

SUMMARY:
{{summary}}

Provide a direct, concise answer.
{TASK_SPECIFIC_INST}
)COMA_PT";

inline constexpr std::string_view k_tc_direct = R"COMA_PT(Answer the MAIN_QUERY using the document below. Sentences may have been removed
from the middle of the document to fit it into the context.

MAIN_QUERY: {{query}}

DOCUMENT:
{{document}}

Provide a direct, concise answer.
{TASK_SPECIFIC_INST}
)COMA_PT";

}  // namespace coma::builtin_prompts
