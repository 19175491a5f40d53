//! Static grouped bar charts.

use std::fmt::Write;

const PALETTE: [&str; 8] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f"];

const BAR_W: f64 = 22.0;
const GROUP_GAP: f64 = 28.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const PANEL_H: f64 = 200.0;

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// One panel of grouped bars. `values[g][s]` is series `s` in group `g`;
/// `None` leaves a gap.
pub struct Panel<'a> {
    pub title: &'a str,
    pub unit: &'a str,
    pub values: Vec<Vec<Option<f64>>>,
    /// Fixed axis maximum; data maximum when unset.
    pub y_max: Option<f64>,
    /// Horizontal reference line with its label.
    pub reference: Option<(f64, String)>,
    pub labels: Vec<Vec<String>>,
}

pub struct Chart<'a> {
    pub title: &'a str,
    pub groups: Vec<String>,
    pub series: Vec<String>,
    pub panels: Vec<Panel<'a>>,
    pub footnotes: Vec<String>,
}

fn nice_max(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * mag >= v {
            return step * mag;
        }
    }
    10.0 * mag
}

impl Chart<'_> {
    pub fn render(&self) -> String {
        let n_series = self.series.len().max(1) as f64;
        let group_w = n_series * BAR_W + GROUP_GAP;
        let plot_w = (self.groups.len().max(1) as f64) * group_w;
        let width = LEFT + plot_w + RIGHT;
        let panel_block = PANEL_H + 70.0;
        let height = 40.0 + panel_block * self.panels.len() as f64 + 18.0 * self.footnotes.len() as f64 + 10.0;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="22" font-size="14" text-anchor="middle">{}</text>"#, width / 2.0, escape(self.title));

        for (p, panel) in self.panels.iter().enumerate() {
            let top = 40.0 + panel_block * p as f64 + 20.0;
            let bottom = top + PANEL_H;
            let data_max = panel.values.iter().flatten().flatten().fold(0.0f64, |a, &b| a.max(b));
            let ref_max = panel.reference.as_ref().map_or(0.0, |r| r.0);
            let y_max = panel.y_max.unwrap_or_else(|| nice_max(data_max.max(ref_max)));
            let y = |v: f64| bottom - (v / y_max).clamp(0.0, 1.0) * PANEL_H;

            let _ = writeln!(s, r#"<text x="{LEFT}" y="{:.1}" font-size="12">{}</text>"#, top - 8.0, escape(panel.title));
            for tick in 0..=4 {
                let v = y_max * tick as f64 / 4.0;
                let ty = y(v);
                let _ = writeln!(
                    s,
                    "<line x1=\"{LEFT}\" y1=\"{ty:.1}\" x2=\"{:.1}\" y2=\"{ty:.1}\" stroke=\"#ddd\"/>",
                    LEFT + plot_w
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}{}</text>"#,
                    LEFT - 6.0,
                    ty + 4.0,
                    trim_num(v),
                    escape(panel.unit)
                );
            }
            let _ = writeln!(s, "<line x1=\"{LEFT}\" y1=\"{bottom:.1}\" x2=\"{:.1}\" y2=\"{bottom:.1}\" stroke=\"#333\"/>", LEFT + plot_w);

            for (g, row) in panel.values.iter().enumerate() {
                let gx = LEFT + g as f64 * group_w + GROUP_GAP / 2.0;
                for (si, v) in row.iter().enumerate() {
                    let Some(v) = v else { continue };
                    let x = gx + si as f64 * BAR_W;
                    let top_y = y(*v);
                    let _ = writeln!(
                        s,
                        r#"<rect x="{x:.1}" y="{top_y:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                        BAR_W - 2.0,
                        bottom - top_y,
                        PALETTE[si % PALETTE.len()]
                    );
                    let label = panel.labels.get(g).and_then(|r| r.get(si)).cloned().unwrap_or_else(|| trim_num(*v));
                    let _ = writeln!(
                        s,
                        r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="middle">{}</text>"#,
                        x + (BAR_W - 2.0) / 2.0,
                        top_y - 3.0,
                        escape(&label)
                    );
                }
                if p + 1 == self.panels.len() || p == 0 {
                    let name = self.groups.get(g).map(String::as_str).unwrap_or("");
                    let _ = writeln!(
                        s,
                        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                        gx + n_series * BAR_W / 2.0,
                        bottom + 16.0,
                        escape(name)
                    );
                }
            }

            if let Some((v, label)) = &panel.reference {
                let ry = y(*v);
                let _ = writeln!(
                    s,
                    "<line x1=\"{LEFT}\" y1=\"{ry:.1}\" x2=\"{:.1}\" y2=\"{ry:.1}\" stroke=\"#c00\" stroke-dasharray=\"6 4\"/>",
                    LEFT + plot_w
                );
                let _ = writeln!(
                    s,
                    "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"#c00\">{}</text>",
                    LEFT + plot_w + 6.0,
                    ry + 4.0,
                    escape(label)
                );
            }
        }

        let legend_x = LEFT + plot_w + 10.0;
        for (si, name) in self.series.iter().enumerate() {
            let ly = 50.0 + si as f64 * 16.0;
            let _ = writeln!(s, r#"<rect x="{legend_x:.1}" y="{:.1}" width="10" height="10" fill="{}"/>"#, ly - 9.0, PALETTE[si % PALETTE.len()]);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, legend_x + 14.0, escape(name));
        }
        let foot_top = 40.0 + panel_block * self.panels.len() as f64;
        for (i, note) in self.footnotes.iter().enumerate() {
            let _ = writeln!(s, r#"<text x="{LEFT}" y="{:.1}" font-size="10">{}</text>"#, foot_top + 18.0 * i as f64, escape(note));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn trim_num(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.1}")
    }
}
