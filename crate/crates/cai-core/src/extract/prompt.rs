//! Deterministic prompt rendering. Identical specs render to byte-identical
//! prompts: examples come before the input, and the schema block states the
//! NO_ANSWER rule explicitly.

use crate::extract::store::GoldenExample;

/// First line of the main extraction prompt; the mock backend dispatches on
/// these task markers.
pub const MAIN_TASK_MARKER: &str = "Task: commitment-extraction";
pub const ENTITY_TASK_MARKER: &str = "Task: entity-match";
pub const BOUNDARY_TASK_MARKER: &str = "Task: boundary-classification";

pub const DEFAULT_INSTRUCTION: &str = "Extract every corporate carbon-reduction commitment \
stated in the input text. Use only information stated in the input text and ignore any prior \
knowledge. Respond with a JSON array of objects, one object per commitment, each containing \
exactly the schema keys below.";

const SCHEMA_FIELDS: [(&str, &str); 8] = [
    ("target_year", "four-digit calendar year the commitment targets"),
    ("base_year", "year the reduction is measured from, as stated (e.g. \"2015\" or \"FY20\")"),
    ("target_percent", "reduction percentage as a number, without the % sign"),
    ("target_type", "one of \"absolute\", \"intensity\", \"net zero\""),
    ("scope", "emission scopes covered, as digits in ascending order (\"12\" for scopes 1 and 2)"),
    ("target_wording", "short label of the commitment"),
    ("sub_context", "the sentence fragment stating the commitment, quoted verbatim from the input"),
    ("entity_name", "the entity the commitment applies to, if named"),
];

/// Marker lines enclosing contexts in the rendered prompt. The mock backend
/// extracts the final input section by looking for these.
pub const INPUT_MARKER: &str = "Input:";
pub const OUTPUT_MARKER: &str = "Output:";

/// Everything needed to render one extraction prompt.
pub struct PromptSpec<'a> {
    pub instruction: &'a str,
    pub examples: Vec<&'a GoldenExample>,
    pub input_context: &'a str,
}

/// Render the prompt: instruction, schema block, the k examples as
/// input/output pairs, then the input context.
pub fn build_prompt(spec: &PromptSpec) -> String {
    let mut out = String::new();
    out.push_str(MAIN_TASK_MARKER);
    out.push('\n');
    out.push_str(spec.instruction);
    out.push_str("\n\nOutput schema (every key must be present in every object):\n");
    for (name, description) in SCHEMA_FIELDS {
        out.push_str(&format!("- {name}: {description}\n"));
    }
    out.push_str(
        "If a value cannot be determined from the input, return \"NO_ANSWER\" for that attribute.\n",
    );
    for (i, example) in spec.examples.iter().enumerate() {
        out.push_str(&format!("\nExample {}:\n{INPUT_MARKER}\n", i + 1));
        out.push_str(&example.context);
        out.push_str(&format!("\n{OUTPUT_MARKER}\n"));
        out.push_str(&serde_json::to_string(&example.expected).expect("serializable records"));
        out.push('\n');
    }
    out.push_str(&format!("\n{INPUT_MARKER}\n"));
    out.push_str(spec.input_context);
    out.push_str(&format!("\n{OUTPUT_MARKER}\n"));
    out
}

pub fn build_entity_match_prompt(entity_name: &str, company_name: &str) -> String {
    format!(
        "{ENTITY_TASK_MARKER}\n\
         Decide whether the extracted entity name refers to the reporting company.\n\
         Answer with exactly \"yes\" or \"no\".\n\
         Entity name: {entity_name}\n\
         Company name: {company_name}\n\
         Answer:\n"
    )
}

pub fn build_boundary_prompt(target_wording: &str, sub_context: &str) -> String {
    format!(
        "{BOUNDARY_TASK_MARKER}\n\
         Decide whether the commitment applies corporate-wide or only to a subset of the \
         company, such as a subsidiary, a country, a site, or a single business line.\n\
         Answer with exactly \"corporate_wide\" or \"non_corporate_wide\".\n\
         Target wording: {target_wording}\n\
         Sub-context: {sub_context}\n\
         Answer:\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashedBagBackend;
    use crate::extract::store::{ExampleStore, GoldenExampleLine};
    use crate::extract::RawCommitment;

    fn store() -> ExampleStore {
        let mut rec = RawCommitment::empty();
        rec.target_percent = "30".into();
        ExampleStore::from_lines(
            vec![GoldenExampleLine {
                context: "filler reduce emissions by 30% filler".into(),
                sub_context: "reduce emissions by 30%".into(),
                expected: vec![rec],
            }],
            &HashedBagBackend::default(),
        )
        .unwrap()
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = store();
        let spec = || PromptSpec {
            instruction: DEFAULT_INSTRUCTION,
            examples: s.examples().iter().collect(),
            input_context: "some input",
        };
        assert_eq!(build_prompt(&spec()), build_prompt(&spec()));
    }

    #[test]
    fn zero_shot_prompt_has_no_examples() {
        let spec = PromptSpec {
            instruction: DEFAULT_INSTRUCTION,
            examples: vec![],
            input_context: "the input text",
        };
        let p = build_prompt(&spec);
        assert!(!p.contains("Example 1:"));
        assert!(p.contains("the input text"));
        assert!(p.contains("NO_ANSWER"));
    }

    #[test]
    fn examples_come_before_the_input() {
        let s = store();
        let spec = PromptSpec {
            instruction: DEFAULT_INSTRUCTION,
            examples: s.examples().iter().collect(),
            input_context: "INPUT-SENTINEL",
        };
        let p = build_prompt(&spec);
        let example_pos = p.find("Example 1:").unwrap();
        let input_pos = p.find("INPUT-SENTINEL").unwrap();
        assert!(example_pos < input_pos);
        assert!(p.trim_end().ends_with(OUTPUT_MARKER));
        assert!(p.contains("target_wording"));
    }
}
