use std::collections::BTreeSet;

use crate::model::{DiagCode, Diagnostic, Document, Element, FragmentKind, UseCase};

/// Checks the structural design principles of an enhanced sequence diagram.
///
/// Errors (`E_DESIGN_RULE`): more than one use case in a file, a message
/// that does not name exactly one API, a fragment whose branch count does
/// not fit its kind, a use case whose last top-level element is not a
/// return message. Warnings (`W_DESIGN_RULE`): a bound decision table none
/// of whose reads or writes match any field of the use case.
pub fn check_design_rules(doc: &Document) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if doc.usecases.len() > 1 {
        let names: Vec<&str> = doc.usecases.iter().map(|u| u.name.as_str()).collect();
        out.push(Diagnostic::new(
            DiagCode::DesignRule,
            format!(
                "file defines {} use cases ({}); a sequence diagram describes exactly one use case",
                names.len(),
                names.join(", ")
            ),
        ));
    }
    for uc in &doc.usecases {
        check_usecase(doc, uc, &mut out);
    }
    out
}

fn check_usecase(doc: &Document, uc: &UseCase, out: &mut Vec<Diagnostic>) {
    match uc.body.last() {
        Some(Element::Return(_)) => {}
        Some(other) => out.push(
            Diagnostic::new(
                DiagCode::DesignRule,
                format!(
                    "use case `{}` must end with a return message, ends with `{}`",
                    uc.name,
                    other.id()
                ),
            )
            .at(other.id().clone()),
        ),
        None => out.push(Diagnostic::new(
            DiagCode::DesignRule,
            format!("use case `{}` has no elements; it must end with a return message", uc.name),
        )),
    }

    let scope = fields_in_scope(doc, uc);
    for elem in uc.elements() {
        match elem {
            Element::Message(m) => {
                let api = m.api.trim();
                if api.is_empty() || api.contains(',') {
                    out.push(
                        Diagnostic::new(
                            DiagCode::DesignRule,
                            format!("message `{}` must invoke exactly one API, got {:?}", m.id, m.api),
                        )
                        .at(m.id.clone()),
                    );
                }
            }
            Element::Fragment(f) => {
                let n = f.branches.len();
                let ok = match f.kind {
                    FragmentKind::Alt => n >= 2,
                    _ => n == 1,
                };
                if !ok {
                    let want = if f.kind == FragmentKind::Alt { "at least 2" } else { "exactly 1" };
                    out.push(
                        Diagnostic::new(
                            DiagCode::DesignRule,
                            format!("{} fragment `{}` has {n} branch(es), needs {want}", f.kind, f.id),
                        )
                        .at(f.id.clone()),
                    );
                }
            }
            Element::Return(_) => {}
        }
        for table_id in elem.tables() {
            let Some(table) = doc.tables.get(table_id) else { continue };
            let touched = table.rules.iter().any(|r| {
                r.condition_reads
                    .iter()
                    .chain(&r.action_reads)
                    .chain(r.action_writes.iter().map(|f| &f.name))
                    .any(|name| scope.contains(name.as_str()))
            });
            if !touched {
                out.push(
                    Diagnostic::new(
                        DiagCode::DesignRuleWarning,
                        format!(
                            "table `{table_id}` bound to `{}` reads and writes no field of the use case",
                            elem.id()
                        ),
                    )
                    .at(elem.id().clone()),
                );
            }
        }
    }
}

/// Names of input fields, fields of every API the use case calls, and
/// return fields.
fn fields_in_scope<'a>(doc: &'a Document, uc: &'a UseCase) -> BTreeSet<&'a str> {
    let mut names: BTreeSet<&str> = uc.input_fields.iter().map(|f| f.name.as_str()).collect();
    for elem in uc.elements() {
        match elem {
            Element::Message(m) => {
                if let Some(api) = doc.api_of(m) {
                    names.extend(api.request.iter().chain(&api.response).map(|f| f.name.as_str()));
                }
            }
            Element::Return(r) => names.extend(r.fields.iter().map(|f| f.name.as_str())),
            Element::Fragment(_) => {}
        }
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esd::parse_document;
    use crate::model::{Branch, Fragment};

    const DEMO: &str = include_str!("../../fixtures/demo.esd");

    #[test]
    fn demo_is_clean() {
        assert!(check_design_rules(&parse_document(DEMO).unwrap()).is_empty());
    }

    #[test]
    fn two_usecases() {
        let second = r#"
usecase "Other" {
  input {}
  participant a
  return r {}
}
"#;
        let doc = parse_document(&format!("{DEMO}{second}")).unwrap();
        let diags = check_design_rules(&doc);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagCode::DesignRule);
    }

    #[test]
    fn alt_with_one_branch() {
        let text = DEMO.replace(
            "    branch \"active\" {\n      message m2 from a to c api \"Debit\"\n    }\n",
            "",
        );
        let doc = parse_document(&text).unwrap();
        let diags = check_design_rules(&doc);
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert_eq!(diags[0].code, DiagCode::DesignRule);
        assert_eq!(diags[0].node.as_ref().unwrap(), "f1");
    }

    #[test]
    fn programmatic_violations() {
        let mut doc = parse_document(DEMO).unwrap();
        let uc = &doc.usecases[0];
        let mut body = uc.body.clone();
        if let Element::Message(m) = &mut body[0] {
            m.api = String::new();
        }
        body.insert(
            1,
            Element::Fragment(Fragment {
                id: "o1".into(),
                kind: FragmentKind::Opt,
                tables: vec![],
                branches: vec![Branch { label: "x".into(), elements: vec![] }; 2],
            }),
        );
        body.pop();
        doc.usecases[0] =
            UseCase::new("Demo", uc.input_fields.clone(), uc.participants.clone(), body).unwrap();
        let codes: Vec<_> = check_design_rules(&doc)
            .into_iter()
            .map(|d| d.code)
            .filter(|c| *c == DiagCode::DesignRule)
            .collect();
        assert_eq!(codes.len(), 3);
    }

    #[test]
    fn unrelated_table_warns() {
        let text = DEMO.replace("reads [account_status]", "reads [colour]");
        let diags = check_design_rules(&parse_document(&text).unwrap());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagCode::DesignRuleWarning);
    }
}
