use std::collections::{BTreeMap, HashSet};

use super::lexer::{tokenize, Pos, Tok, Token};
use super::{ParseError, ParseFailure, SourceSpan, SpanTable};
use crate::model::{
    ApiSpec, Branch, DType, DecisionTable, DiagCode, Diagnostic, Document, Element, Field,
    Fragment, FragmentKind, Message, ReturnMessage, Rule, UseCase,
};

pub(crate) fn parse(src: &str) -> Result<(Document, SpanTable), ParseFailure> {
    let tokens = tokenize(src).map_err(|e| ParseFailure::Syntax(vec![e]))?;
    let mut p = Parser {
        tokens,
        at: 0,
        spans: BTreeMap::new(),
        ids: HashSet::new(),
    };
    let mut doc = Document::default();
    let mut spans = Vec::new();
    let mut duplicates = Vec::new();
    loop {
        let t = p.peek().clone();
        match &t.tok {
            Tok::Eof if p.at > 0 => break,
            Tok::Ident(kw) if kw == "usecase" => {
                let uc = p.usecase().map_err(|e| ParseFailure::Syntax(vec![e]))?;
                spans.push(std::mem::take(&mut p.spans));
                doc.usecases.push(uc);
            }
            Tok::Ident(kw) if kw == "api" => {
                let api = p.api().map_err(|e| ParseFailure::Syntax(vec![e]))?;
                if doc.apis.contains_key(&api.name) {
                    duplicates.push(dup_diag(t.start, "api", &api.name));
                }
                doc.apis.insert(api.name.clone(), api);
            }
            Tok::Ident(kw) if kw == "table" => {
                let table = p.table().map_err(|e| ParseFailure::Syntax(vec![e]))?;
                if doc.tables.contains_key(&table.id) {
                    duplicates.push(dup_diag(t.start, "table", &table.id));
                }
                doc.tables.insert(table.id.clone(), table);
            }
            _ => {
                return Err(ParseFailure::Syntax(vec![ParseError::new(
                    t.start,
                    "`usecase`, `api` or `table`",
                    t.tok.to_string(),
                )]))
            }
        }
    }
    let mut diags = duplicates;
    diags.extend(resolve(&doc, &spans));
    if !diags.is_empty() {
        return Err(ParseFailure::Unresolved(diags));
    }
    Ok((doc, spans))
}

fn dup_diag(pos: Pos, what: &str, name: &str) -> Diagnostic {
    Diagnostic::new(
        DiagCode::Parse,
        format!("{}:{}: duplicate {what} {name}", pos.line, pos.column),
    )
}

/// Every api and table reference must name a definition in the document.
fn resolve(doc: &Document, spans: &SpanTable) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (i, uc) in doc.usecases.iter().enumerate() {
        for elem in uc.elements() {
            let at = spans[i]
                .get(elem.id())
                .map(|s| format!("{}:{}: ", s.start.line, s.start.column))
                .unwrap_or_default();
            if let Element::Message(m) = elem {
                if !doc.apis.contains_key(&m.api) {
                    out.push(
                        Diagnostic::new(DiagCode::Parse, format!("{at}unresolved api {}", m.api))
                            .at(m.id.clone()),
                    );
                }
            }
            for t in elem.tables() {
                if !doc.tables.contains_key(t) {
                    out.push(
                        Diagnostic::new(DiagCode::Parse, format!("{at}unresolved table {t}"))
                            .at(elem.id().clone()),
                    );
                }
            }
        }
    }
    for api in doc.apis.values() {
        for (part, fields) in [("request", &api.request), ("response", &api.response)] {
            for name in duplicate_names(fields) {
                out.push(Diagnostic::new(
                    DiagCode::Parse,
                    format!("duplicate {part} field {name} in api {}", api.name),
                ));
            }
        }
    }
    out
}

fn duplicate_names(fields: &[Field]) -> Vec<&str> {
    let mut seen = HashSet::new();
    fields
        .iter()
        .filter(|f| !seen.insert(f.name.as_str()))
        .map(|f| f.name.as_str())
        .collect()
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    spans: BTreeMap<crate::model::NodeId, SourceSpan>,
    ids: HashSet<String>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if t.tok != Tok::Eof {
            self.at += 1;
        }
        t
    }

    fn prev_end(&self) -> Pos {
        self.tokens[self.at.saturating_sub(1)].end
    }

    fn error(&self, expected: impl Into<String>) -> ParseError {
        let t = self.peek();
        ParseError::new(t.start, expected, t.tok.to_string())
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> PResult<Token> {
        if self.is_kw(kw) {
            Ok(self.next())
        } else {
            Err(self.error(format!("`{kw}`")))
        }
    }

    fn punct(&mut self, tok: Tok) -> PResult<()> {
        if self.peek().tok == tok {
            self.next();
            Ok(())
        } else {
            Err(self.error(tok.to_string()))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => Err(self.error(what)),
        }
    }

    fn string(&mut self, what: &str) -> PResult<String> {
        match &self.peek().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => Err(self.error(what)),
        }
    }

    fn node_id(&mut self) -> PResult<crate::model::NodeId> {
        let start = self.peek().start;
        let found = self.peek().tok.to_string();
        let id = self.ident("node id")?;
        if !self.ids.insert(id.clone()) {
            return Err(ParseError::new(start, "unique node id", found));
        }
        Ok(id.into())
    }

    fn usecase(&mut self) -> PResult<UseCase> {
        let start = self.keyword("usecase")?.start;
        let name = self.string("use case name string")?;
        self.punct(Tok::LBrace)?;
        self.keyword("input")?;
        let input = self.field_block()?;
        let mut participants = vec![];
        loop {
            if self.is_kw("participant") {
                self.next();
                participants.push(self.ident("participant name")?);
            } else if participants.is_empty() {
                return Err(self.error("`participant`"));
            } else {
                break;
            }
        }
        let body = self.elements()?;
        self.punct(Tok::RBrace)?;
        self.ids.clear();
        UseCase::new(name, input, participants, body)
            .map_err(|e| ParseError::new(start, "well-formed use case", e.to_string()))
    }

    /// Elements up to (not including) the closing brace of the scope.
    fn elements(&mut self) -> PResult<Vec<Element>> {
        let mut out = vec![];
        while self.peek().tok != Tok::RBrace {
            out.push(self.element()?);
        }
        Ok(out)
    }

    fn element(&mut self) -> PResult<Element> {
        let start = self.peek().start;
        let kw = match &self.peek().tok {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.error("element or `}`")),
        };
        let elem = match kw.as_str() {
            "message" => {
                self.next();
                let id = self.node_id()?;
                self.keyword("from")?;
                let from = self.ident("participant name")?;
                self.keyword("to")?;
                let to = self.ident("participant name")?;
                self.keyword("api")?;
                let api = self.string("api name string")?;
                let tables = self.binding()?;
                Element::Message(Message {
                    id,
                    from,
                    to,
                    api,
                    tables,
                })
            }
            "opt" | "loop" | "break" | "alt" => {
                self.next();
                let kind = match kw.as_str() {
                    "opt" => FragmentKind::Opt,
                    "loop" => FragmentKind::Loop,
                    "break" => FragmentKind::Break,
                    _ => FragmentKind::Alt,
                };
                let id = self.node_id()?;
                let tables = self.binding()?;
                self.punct(Tok::LBrace)?;
                let branches = if kind == FragmentKind::Alt {
                    let mut branches: Vec<Branch> = vec![];
                    loop {
                        let label_pos = self.peek().start;
                        self.keyword("branch")?;
                        let found = self.peek().tok.to_string();
                        let label = self.string("branch label string")?;
                        if branches.iter().any(|b| b.label == label) {
                            return Err(ParseError::new(label_pos, "unique branch label", found));
                        }
                        self.punct(Tok::LBrace)?;
                        let elements = self.elements()?;
                        self.punct(Tok::RBrace)?;
                        branches.push(Branch { label, elements });
                        if self.peek().tok == Tok::RBrace {
                            break;
                        }
                    }
                    branches
                } else {
                    vec![Branch {
                        label: String::new(),
                        elements: self.elements()?,
                    }]
                };
                self.punct(Tok::RBrace)?;
                Element::Fragment(Fragment {
                    id,
                    kind,
                    tables,
                    branches,
                })
            }
            "return" => {
                self.next();
                let id = self.node_id()?;
                let fields = self.field_block()?;
                Element::Return(ReturnMessage { id, fields })
            }
            _ => return Err(self.error("`message`, `opt`, `alt`, `loop`, `break`, `return` or `}`")),
        };
        self.spans.insert(
            elem.id().clone(),
            SourceSpan {
                start,
                end: self.prev_end(),
            },
        );
        Ok(elem)
    }

    fn binding(&mut self) -> PResult<Vec<String>> {
        if !self.is_kw("tables") {
            return Ok(vec![]);
        }
        self.next();
        self.punct(Tok::LBracket)?;
        let mut out = vec![self.ident("table id")?];
        while self.peek().tok == Tok::Comma {
            self.next();
            out.push(self.ident("table id")?);
        }
        self.punct(Tok::RBracket)?;
        Ok(out)
    }

    fn name_list(&mut self) -> PResult<Vec<String>> {
        self.punct(Tok::LBracket)?;
        let mut out = vec![];
        if self.peek().tok != Tok::RBracket {
            out.push(self.ident("field name")?);
            while self.peek().tok == Tok::Comma {
                self.next();
                out.push(self.ident("field name")?);
            }
        }
        self.punct(Tok::RBracket)?;
        Ok(out)
    }

    fn field_block(&mut self) -> PResult<Vec<Field>> {
        self.punct(Tok::LBrace)?;
        let mut out = vec![];
        while self.peek().tok != Tok::RBrace {
            out.push(self.field()?);
        }
        self.next();
        Ok(out)
    }

    fn field(&mut self) -> PResult<Field> {
        if !self.is_kw("field") {
            return Err(self.error("`field` or `}`"));
        }
        self.next();
        let name = self.ident("field name")?;
        self.punct(Tok::Colon)?;
        let base = self.ident("type")?;
        let list = if self.peek().tok == Tok::LBracket {
            self.next();
            self.punct(Tok::RBracket)?;
            true
        } else {
            false
        };
        let mut dtype: DType = base.parse().unwrap_or_else(|e| match e {});
        dtype.list = list;
        let description = match &self.peek().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.next();
                s
            }
            _ => String::new(),
        };
        Ok(Field {
            name,
            dtype,
            description,
        })
    }

    fn api(&mut self) -> PResult<ApiSpec> {
        self.keyword("api")?;
        let name = self.string("api name string")?;
        self.punct(Tok::LBrace)?;
        self.keyword("description")?;
        let description = self.string("description string")?;
        self.keyword("request")?;
        let request = self.field_block()?;
        self.keyword("response")?;
        let response = self.field_block()?;
        self.punct(Tok::RBrace)?;
        Ok(ApiSpec {
            name,
            description,
            request,
            response,
        })
    }

    fn table(&mut self) -> PResult<DecisionTable> {
        self.keyword("table")?;
        let id = self.ident("table id")?;
        self.punct(Tok::LBrace)?;
        let mut rules = vec![self.rule()?];
        while self.peek().tok != Tok::RBrace {
            rules.push(self.rule()?);
        }
        self.next();
        Ok(DecisionTable { id, rules })
    }

    fn rule(&mut self) -> PResult<Rule> {
        self.keyword("rule")?;
        self.punct(Tok::LBrace)?;
        let (condition, condition_reads) = if self.is_kw("when") {
            self.next();
            let cond = self.string("condition string")?;
            self.keyword("reads")?;
            (Some(cond), self.name_list()?)
        } else {
            (None, vec![])
        };
        if !self.is_kw("then") {
            let expected = if condition.is_some() { "`then`" } else { "`when` or `then`" };
            return Err(self.error(expected));
        }
        self.next();
        let action = self.string("action string")?;
        let action_reads = if self.is_kw("reads") {
            self.next();
            self.name_list()?
        } else {
            vec![]
        };
        let action_writes = if self.is_kw("writes") {
            self.next();
            self.field_block()?
        } else {
            vec![]
        };
        self.punct(Tok::RBrace)?;
        Ok(Rule {
            condition,
            condition_reads,
            action,
            action_reads,
            action_writes,
        })
    }
}
