//! Prompt construction, chat-completion transports and response parsing
//! for model-based dependency inference.

mod prompt;
mod response;
mod transport;

pub use prompt::{block_ids, build_prompt, PromptDocument, PromptError, PromptSection, HEADINGS, PROMPT_TEMPLATE_VERSION};
pub use response::{advisory_category, extract_edges, format_error, parse_response, LlmEdgeResponse, RawEdge};
pub use transport::{
    fixture_path, prompt_key, LlmRequest, ReplayTransport, SamplingParams, StubTransport, Transport,
    TransportError,
};

use crate::engine::{Analysis, Inference};
use crate::model::{DiagCode, Diagnostic};

/// Builds the prompt for `target`, sends it, and validates the reply.
///
/// A reply without a usable edge list is retried once with the same
/// prompt; after the second failure the result carries `E_RESPONSE_FORMAT`
/// and no edges. Transport failures become `E_TRANSPORT`.
pub fn infer_with_llm(
    analysis: &Analysis<'_>,
    target: &str,
    transport: &dyn Transport,
    params: SamplingParams,
) -> Result<Inference, PromptError> {
    let context = analysis.predecessors(target)?;
    let prompt = build_prompt(analysis, target, context)?;
    let request = LlmRequest {
        usecase: &analysis.usecase.name,
        target: prompt.target.as_str(),
        prompt: &prompt.rendered,
        params,
    };
    let mut last_format_error = None;
    for _ in 0..2 {
        let text = match transport.send(&request) {
            Ok(text) => text,
            Err(e) => {
                return Ok(Inference {
                    edges: vec![],
                    diagnostics: vec![Diagnostic::new(
                        DiagCode::Transport,
                        format!("request for `{}` failed: {e}", prompt.target),
                    )
                    .at(prompt.target.clone())],
                })
            }
        };
        match parse_response(analysis, &text, &prompt.target, context) {
            Ok((edges, diagnostics)) => return Ok(Inference { edges, diagnostics }),
            Err(d) => last_format_error = Some(d.at(prompt.target.clone())),
        }
    }
    Ok(Inference {
        edges: vec![],
        diagnostics: last_format_error.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esd::parse_document;
    use crate::model::{Category, DependencyEdge};

    const VALID: &str = r#"[{"source":"@input","data":"user_id","target":"m2","category":"api"}]"#;

    #[test]
    fn stub_paths() {
        let doc = parse_document(include_str!("../../fixtures/demo.esd")).unwrap();
        let a = Analysis::new(&doc, &doc.usecases[0]);
        let p = SamplingParams::default();

        let ok = infer_with_llm(&a, "m2", &StubTransport::fixed(VALID), p).unwrap();
        assert_eq!(ok.edges, [DependencyEdge::new("@input", "user_id", "m2", Category::Api)]);
        assert!(ok.diagnostics.is_empty());

        let garbage = StubTransport::fixed("no idea");
        let r = infer_with_llm(&a, "m2", &garbage, p).unwrap();
        assert!(r.edges.is_empty());
        assert_eq!(r.diagnostics.len(), 1);
        assert_eq!(r.diagnostics[0].code, DiagCode::ResponseFormat);
        assert_eq!(garbage.calls(), 2);

        let recover = StubTransport::script(vec![Ok("oops".into()), Ok(VALID.into())]);
        assert_eq!(infer_with_llm(&a, "m2", &recover, p).unwrap().edges.len(), 1);

        let down = infer_with_llm(&a, "m2", &StubTransport::failing("connection refused"), p).unwrap();
        assert!(down.edges.is_empty());
        assert_eq!(down.diagnostics[0].code, DiagCode::Transport);
        assert!(down.diagnostics[0].message.contains("connection refused"));

        assert!(matches!(
            infer_with_llm(&a, "@input", &StubTransport::fixed(VALID), p),
            Err(PromptError::NoConsumption(_))
        ));
    }
}
