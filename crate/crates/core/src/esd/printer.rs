use std::fmt::Write;

use crate::model::{ApiSpec, DecisionTable, Document, Element, Field, FragmentKind, UseCase};

const INDENT: &str = "  ";

pub(crate) fn print(doc: &Document) -> String {
    let mut blocks = Vec::new();
    for uc in &doc.usecases {
        blocks.push(usecase(uc));
    }
    for api in doc.apis.values() {
        blocks.push(api_block(api));
    }
    for table in doc.tables.values() {
        blocks.push(table_block(table));
    }
    blocks.join("\n")
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn line(out: &mut String, depth: usize, text: &str) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
    out.push_str(text);
    out.push('\n');
}

fn field_line(f: &Field) -> String {
    let mut s = format!("field {}: {}", f.name, f.dtype);
    if !f.description.is_empty() {
        s.push(' ');
        s.push_str(&quote(&f.description));
    }
    s
}

fn fields(out: &mut String, depth: usize, head: &str, fields: &[Field]) {
    if fields.is_empty() {
        line(out, depth, &format!("{head} {{}}"));
        return;
    }
    line(out, depth, &format!("{head} {{"));
    for f in fields {
        line(out, depth + 1, &field_line(f));
    }
    line(out, depth, "}");
}

fn binding(tables: &[String]) -> String {
    if tables.is_empty() {
        String::new()
    } else {
        format!(" tables [{}]", tables.join(", "))
    }
}

fn usecase(uc: &UseCase) -> String {
    let mut out = String::new();
    line(&mut out, 0, &format!("usecase {} {{", quote(&uc.name)));
    fields(&mut out, 1, "input", &uc.input_fields);
    for p in &uc.participants {
        line(&mut out, 1, &format!("participant {p}"));
    }
    for e in &uc.body {
        element(&mut out, 1, e);
    }
    line(&mut out, 0, "}");
    out
}

fn scope(out: &mut String, depth: usize, head: &str, elements: &[Element]) {
    if elements.is_empty() {
        line(out, depth, &format!("{head} {{}}"));
        return;
    }
    line(out, depth, &format!("{head} {{"));
    for e in elements {
        element(out, depth + 1, e);
    }
    line(out, depth, "}");
}

fn element(out: &mut String, depth: usize, e: &Element) {
    match e {
        Element::Message(m) => line(
            out,
            depth,
            &format!(
                "message {} from {} to {} api {}{}",
                m.id,
                m.from,
                m.to,
                quote(&m.api),
                binding(&m.tables)
            ),
        ),
        Element::Return(r) => fields(out, depth, &format!("return {}", r.id), &r.fields),
        Element::Fragment(f) => {
            let head = format!("{} {}{}", f.kind, f.id, binding(&f.tables));
            if f.kind == FragmentKind::Alt {
                line(out, depth, &format!("{head} {{"));
                for b in &f.branches {
                    scope(out, depth + 1, &format!("branch {}", quote(&b.label)), &b.elements);
                }
                line(out, depth, "}");
            } else {
                let body: Vec<Element> = f
                    .branches
                    .iter()
                    .flat_map(|b| b.elements.iter().cloned())
                    .collect();
                scope(out, depth, &head, &body);
            }
        }
    }
}

fn api_block(api: &ApiSpec) -> String {
    let mut out = String::new();
    line(&mut out, 0, &format!("api {} {{", quote(&api.name)));
    line(&mut out, 1, &format!("description {}", quote(&api.description)));
    fields(&mut out, 1, "request", &api.request);
    fields(&mut out, 1, "response", &api.response);
    line(&mut out, 0, "}");
    out
}

fn table_block(table: &DecisionTable) -> String {
    let mut out = String::new();
    line(&mut out, 0, &format!("table {} {{", table.id));
    for rule in &table.rules {
        line(&mut out, 1, "rule {");
        if let Some(cond) = &rule.condition {
            line(
                &mut out,
                2,
                &format!("when {} reads [{}]", quote(cond), rule.condition_reads.join(", ")),
            );
        }
        let mut then = format!("then {}", quote(&rule.action));
        if !rule.action_reads.is_empty() {
            let _ = write!(then, " reads [{}]", rule.action_reads.join(", "));
        }
        line(&mut out, 2, &then);
        if !rule.action_writes.is_empty() {
            fields(&mut out, 2, "writes", &rule.action_writes);
        }
        line(&mut out, 1, "}");
    }
    line(&mut out, 0, "}");
    out
}
