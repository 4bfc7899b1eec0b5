//! Partial implementations: the original source with some magic blocks
//! filled by user-written or generated statements.
//!
//! The original text is never modified. Each magic block of it is a site;
//! its content is a list of segments (user or generated) optionally
//! followed by a fresh `...;`, which keeps the site open. Rendering splices
//! the segments in place of the original `...;`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CodegenError, Result};
use crate::cfa::{build_cfas, Cfas};
use crate::frontend::{compile, SourceSpec};
use crate::model::{SiteId, SpecModel};

/// Source-level identity of a magic block: stable across recompilations,
/// unlike site ids. `index` counts the blocks of `owner` (a task or
/// process of `template`) in source order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteRef {
    pub template: String,
    pub owner: String,
    pub index: usize,
}

impl fmt::Display for SiteRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}#{}", self.template, self.owner, self.index)
    }
}

impl std::str::FromStr for SiteRef {
    type Err = CodegenError;

    /// Parses `template.owner#index`; `#index` defaults to 0.
    fn from_str(s: &str) -> Result<SiteRef> {
        let bad = || CodegenError::UnknownSite(s.to_string());
        let (path, index) = match s.rsplit_once('#') {
            Some((p, i)) => (p, i.parse().map_err(|_| bad())?),
            None => (s, 0),
        };
        let (template, owner) = path.split_once('.').ok_or_else(bad)?;
        Ok(SiteRef {
            template: template.to_string(),
            owner: owner.to_string(),
            index,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    User,
    Generated,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub origin: Origin,
    pub text: String,
}

/// Content of one magic block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub segments: Vec<Segment>,
    /// A `...;` follows the segments.
    pub open: bool,
}

impl Default for Fill {
    fn default() -> Self {
        Fill {
            segments: Vec::new(),
            open: true,
        }
    }
}

impl Fill {
    /// The fill without its trailing generated segments, reopened if any
    /// were removed.
    pub fn without_generated(&self) -> Fill {
        let mut f = self.clone();
        let mut removed = false;
        while f
            .segments
            .last()
            .is_some_and(|s| s.origin == Origin::Generated)
        {
            f.segments.pop();
            removed = true;
        }
        if removed {
            f.open = true;
        }
        f
    }

    pub fn has_generated(&self) -> bool {
        self.segments.iter().any(|s| s.origin == Origin::Generated)
    }
}

/// A magic block of the original text.
#[derive(Clone, Debug)]
struct BaseSite {
    sref: SiteRef,
    file: usize,
    /// Byte range of `...;`.
    start: usize,
    end: usize,
    /// Indentation of the line holding the block.
    indent: String,
    /// The block shares its line with other code, as in `{...;}`.
    inline: bool,
}

/// The compiled form of a rendered implementation.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub source: SourceSpec,
    pub model: SpecModel,
    pub cfas: Cfas,
}

impl Compiled {
    /// Site ids of the blocks at `sref` (several when the template has
    /// several instances).
    pub fn sites_of(&self, sref: &SiteRef) -> Vec<SiteId> {
        site_refs(&self.model)
            .into_iter()
            .filter(|(_, r)| r == sref)
            .map(|(id, _)| id)
            .collect()
    }

    /// Open blocks grouped by source identity, in order of their first id.
    pub fn open_sites(&self) -> Vec<(SiteRef, Vec<SiteId>)> {
        let mut out: Vec<(SiteRef, Vec<SiteId>)> = Vec::new();
        for (id, r) in site_refs(&self.model) {
            match out.iter_mut().find(|(x, _)| *x == r) {
                Some((_, ids)) => ids.push(id),
                None => out.push((r, vec![id])),
            }
        }
        out
    }
}

/// Source identity of every site of `model`.
pub fn site_refs(model: &SpecModel) -> Vec<(SiteId, SiteRef)> {
    let owner = |id: SiteId| -> (String, String) {
        let s = &model.magic_sites[id];
        let template = model.instances[s.instance].template.clone();
        let owner = match (s.task, s.process) {
            (Some(t), _) => model.tasks[t].local_name.clone(),
            (None, Some(p)) => {
                let n = &model.processes[p].name;
                n.rsplit('.').next().unwrap_or(n).to_string()
            }
            (None, None) => String::new(),
        };
        (template, owner)
    };
    // Distinct source positions per (template, owner), in text order.
    let mut positions: BTreeMap<(String, String), Vec<(u32, u32)>> = BTreeMap::new();
    for s in &model.magic_sites {
        let key = owner(s.id);
        let p = (s.pos.file, s.pos.offset);
        let v = positions.entry(key).or_default();
        if !v.contains(&p) {
            v.push(p);
        }
    }
    for v in positions.values_mut() {
        v.sort();
    }
    model
        .magic_sites
        .iter()
        .map(|s| {
            let (template, owner) = owner(s.id);
            let index = positions[&(template.clone(), owner.clone())]
                .iter()
                .position(|&p| p == (s.pos.file, s.pos.offset))
                .expect("position recorded above");
            (
                s.id,
                SiteRef {
                    template,
                    owner,
                    index,
                },
            )
        })
        .collect()
}

pub fn compile_source(source: &SourceSpec) -> Result<Compiled> {
    let model = compile(source).map_err(|e| CodegenError::Compile(format_frontend(source, &e)))?;
    let cfas = build_cfas(&model).map_err(|e| CodegenError::Compile(e.to_string()))?;
    Ok(Compiled {
        source: source.clone(),
        model,
        cfas,
    })
}

fn format_frontend(source: &SourceSpec, e: &crate::frontend::FrontendError) -> String {
    let pos = e.pos();
    format!(
        "{}:{}:{}: {}",
        source.path_of(pos),
        pos.line,
        pos.col,
        e.message()
    )
}

#[derive(Clone, Debug)]
pub struct PartialImpl {
    base: SourceSpec,
    sites: Vec<BaseSite>,
    fills: BTreeMap<SiteRef, Fill>,
}

impl PartialImpl {
    /// Wraps a specification; its magic blocks become the sites.
    pub fn new(base: SourceSpec) -> Result<PartialImpl> {
        let c = compile_source(&base)?;
        let mut sites: Vec<BaseSite> = Vec::new();
        for (id, sref) in site_refs(&c.model) {
            if sites.iter().any(|s| s.sref == sref) {
                continue;
            }
            let pos = c.model.magic_sites[id].pos;
            let file = pos.file as usize;
            let text = &base.files[file].1;
            let start = pos.offset as usize;
            let end = text[start..]
                .find(';')
                .map(|k| start + k + 1)
                .ok_or_else(|| CodegenError::Compile(format!("magic block {sref} lacks `;`")))?;
            let line_start = text[..start].rfind('\n').map_or(0, |k| k + 1);
            let indent: String = text[line_start..start]
                .chars()
                .take_while(|c| c.is_whitespace())
                .collect();
            let inline = !text[line_start..start].trim().is_empty();
            sites.push(BaseSite {
                sref,
                file,
                start,
                end,
                indent,
                inline,
            });
        }
        sites.sort_by_key(|a| (a.file, a.start));
        Ok(PartialImpl {
            base,
            sites,
            fills: BTreeMap::new(),
        })
    }

    pub fn base(&self) -> &SourceSpec {
        &self.base
    }

    /// Every magic block of the original text.
    pub fn site_refs(&self) -> Vec<SiteRef> {
        self.sites.iter().map(|s| s.sref.clone()).collect()
    }

    pub fn fill(&self, sref: &SiteRef) -> Fill {
        self.fills.get(sref).cloned().unwrap_or_default()
    }

    pub fn fills(&self) -> &BTreeMap<SiteRef, Fill> {
        &self.fills
    }

    fn base_site(&self, sref: &SiteRef) -> Result<&BaseSite> {
        self.sites
            .iter()
            .find(|s| s.sref == *sref)
            .ok_or_else(|| CodegenError::UnknownSite(sref.to_string()))
    }

    /// Indentation used for statements placed in `sref`.
    pub fn indent_of(&self, sref: &SiteRef) -> Result<String> {
        let s = self.base_site(sref)?;
        Ok(Self::body_indent(s))
    }

    fn body_indent(site: &BaseSite) -> String {
        if site.inline {
            format!("{}  ", site.indent)
        } else {
            site.indent.clone()
        }
    }

    /// Text replacing the original `...;` of `site`. Inline blocks are
    /// opened onto their own lines.
    fn render_fill(site: &BaseSite, fill: &Fill) -> String {
        let mut parts: Vec<&str> = fill
            .segments
            .iter()
            .map(|s| s.text.trim())
            .filter(|t| !t.is_empty())
            .collect();
        if fill.open {
            parts.push("...;");
        }
        let indent = Self::body_indent(site);
        let body = parts.join(&format!("\n{indent}"));
        if site.inline && !body.is_empty() {
            format!("\n{indent}{body}\n{}", site.indent)
        } else {
            body
        }
    }

    /// The current source text.
    pub fn render(&self) -> SourceSpec {
        let mut out = self.base.clone();
        for (k, (_, text)) in out.files.iter_mut().enumerate() {
            let mut s = String::with_capacity(text.len());
            let mut at = 0;
            for site in self.sites.iter().filter(|s| s.file == k) {
                s.push_str(&text[at..site.start]);
                match self.fills.get(&site.sref) {
                    Some(f) => s.push_str(&Self::render_fill(site, f)),
                    None => s.push_str(&text[site.start..site.end]),
                }
                at = site.end;
            }
            s.push_str(&text[at..]);
            *text = s;
        }
        out
    }

    pub fn compile(&self) -> Result<Compiled> {
        compile_source(&self.render())
    }

    /// Replaces the content of `sref` with user text. A trailing `...;`
    /// keeps the block open; no other `...` may appear.
    pub fn edit_site(&mut self, sref: &SiteRef, text: &str) -> Result<()> {
        self.base_site(sref)?;
        let t = text.trim();
        let (body, open) = match t.strip_suffix("...;") {
            Some(b) => (b.trim_end(), true),
            None if t == "..." => ("", true),
            None => (t, false),
        };
        if body.contains("...") {
            return Err(CodegenError::InvalidEdit(
                "only a trailing `...;` may remain in a magic block".into(),
            ));
        }
        let fill = Fill {
            segments: if body.is_empty() {
                Vec::new()
            } else {
                vec![Segment {
                    origin: Origin::User,
                    text: body.to_string(),
                }]
            },
            open,
        };
        self.set_fill(sref, fill)
    }

    /// Installs `fill` at `sref` if the result still compiles.
    pub(crate) fn set_fill(&mut self, sref: &SiteRef, fill: Fill) -> Result<()> {
        let old = self.fills.insert(sref.clone(), fill);
        if let Err(e) = self.compile() {
            match old {
                Some(f) => self.fills.insert(sref.clone(), f),
                None => self.fills.remove(sref),
            };
            return Err(e);
        }
        Ok(())
    }

    /// Whether `sref` still contains a `...;`.
    pub fn is_open(&self, sref: &SiteRef) -> bool {
        self.fill(sref).open
    }
}
