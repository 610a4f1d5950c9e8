use std::collections::HashSet;

use super::lexer::{tokenize, Spanned, Tok};
use super::{Plan, PlanArg, PlanError, PlanStep, StepAction};

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    defined: HashSet<String>,
}

/// Parses plan code into a [`Plan`]. Pure: nothing is executed.
pub fn parse_plan(code: &str) -> Result<Plan, PlanError> {
    let mut p = Parser {
        toks: tokenize(code)?,
        pos: 0,
        defined: HashSet::new(),
    };
    let mut steps = Vec::new();
    let mut lines = Vec::new();
    loop {
        while p.peek() == &Tok::Newline {
            p.pos += 1;
        }
        if p.peek() == &Tok::Eof {
            break;
        }
        let line = p.current().line;
        let step = p.statement()?;
        p.defined.insert(step.binding.clone());
        steps.push(step);
        lines.push(line);
    }
    Ok(Plan {
        steps,
        lines,
        source_text: code.to_string(),
    })
}

impl Parser {
    fn current(&self) -> &Spanned {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn peek(&self) -> &Tok {
        &self.current().tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        &self.toks[(self.pos + offset).min(self.toks.len() - 1)].tok
    }

    fn error(&self, expected: &str) -> PlanError {
        let cur = self.current();
        PlanError::syntax(
            cur.line,
            cur.column,
            format!("{expected}, found {}", cur.tok.describe()),
        )
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), PlanError> {
        if *self.peek() == tok {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<String, PlanError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.pos += 1;
                Ok(name)
            }
            _ => Err(self.error(expected)),
        }
    }

    fn string(&mut self, expected: &str) -> Result<String, PlanError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error(expected)),
        }
    }

    /// Reads a variable name and checks it was bound by an earlier statement.
    fn variable(&mut self) -> Result<String, PlanError> {
        let line = self.current().line;
        let name = self.ident("variable")?;
        if !self.defined.contains(&name) {
            return Err(PlanError::UseBeforeDefine {
                variable: name,
                line,
            });
        }
        Ok(name)
    }

    fn statement(&mut self) -> Result<PlanStep, PlanError> {
        let binding = self.ident("variable name")?;
        self.expect(Tok::Eq, "`=`")?;
        let action = self.rhs()?;
        match self.peek() {
            Tok::Newline | Tok::Eof => {}
            _ => return Err(self.error("end of statement")),
        }
        Ok(PlanStep { binding, action })
    }

    fn rhs(&mut self) -> Result<StepAction, PlanError> {
        match self.peek().clone() {
            Tok::Str(value) => {
                self.pos += 1;
                Ok(StepAction::Literal { value })
            }
            Tok::Ident(name) if name == "self" && self.peek_at(1) == &Tok::Dot => {
                self.task_call()
            }
            Tok::Ident(_) => {
                let source = self.variable()?;
                if self.peek() == &Tok::LBracket {
                    let key = self.subscript()?;
                    Ok(StepAction::FieldExtract { source, key })
                } else {
                    Ok(StepAction::Alias { source })
                }
            }
            _ => Err(self.error("string, variable or self.execute_task call")),
        }
    }

    fn subscript(&mut self) -> Result<String, PlanError> {
        self.expect(Tok::LBracket, "`[`")?;
        let key = self.string("string key")?;
        self.expect(Tok::RBracket, "`]`")?;
        Ok(key)
    }

    fn task_call(&mut self) -> Result<StepAction, PlanError> {
        self.pos += 2; // `self` `.`
        match self.peek() {
            Tok::Ident(m) if m == "execute_task" => self.pos += 1,
            _ => return Err(self.error("`execute_task`")),
        }
        self.expect(Tok::LParen, "`(`")?;
        let task = self.string("task name string")?;
        self.expect(Tok::Comma, "`,`")?;
        self.expect(Tok::LBracket, "`[` opening the input array")?;
        let mut args = Vec::new();
        if self.peek() != &Tok::RBracket {
            loop {
                args.push(self.arg()?);
                match self.peek() {
                    Tok::Comma => self.pos += 1,
                    Tok::RBracket => break,
                    _ => return Err(self.error("`,` or `]`")),
                }
            }
        }
        self.expect(Tok::RBracket, "`]`")?;
        self.expect(Tok::RParen, "`)`")?;
        Ok(StepAction::TaskCall { task, args })
    }

    fn arg(&mut self) -> Result<PlanArg, PlanError> {
        match self.peek().clone() {
            Tok::Str(value) => {
                self.pos += 1;
                Ok(PlanArg::Literal { value })
            }
            Tok::Ident(_) => {
                let var = self.variable()?;
                if self.peek() == &Tok::LBracket {
                    let key = self.subscript()?;
                    Ok(PlanArg::Field { var, key })
                } else {
                    Ok(PlanArg::Var { name: var })
                }
            }
            _ => Err(self.error("string or variable argument")),
        }
    }
}
