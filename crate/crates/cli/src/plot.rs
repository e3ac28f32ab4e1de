//! Generated matplotlib scripts that read the CSVs next to them.

#[derive(Debug, Clone)]
pub struct Panel {
    pub csv: String,
    pub x: String,
    pub ys: Vec<String>,
    pub log_x: bool,
    pub log_y: bool,
    pub title: String,
}

impl Panel {
    pub fn new(csv: &str, x: &str, ys: &[&str], title: &str) -> Self {
        Self {
            csv: csv.into(),
            x: x.into(),
            ys: ys.iter().map(|s| s.to_string()).collect(),
            log_x: false,
            log_y: false,
            title: title.into(),
        }
    }

    pub fn log_log(mut self) -> Self {
        self.log_x = true;
        self.log_y = true;
        self
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }
}

fn py_str(s: &str) -> String {
    format!("{s:?}")
}

fn py_bool(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

/// Script that draws one panel per entry and saves `<stem>.png`.
pub fn script(stem: &str, panels: &[Panel]) -> String {
    let mut s = String::from(
        "#!/usr/bin/env python3\n\
         # Generated by flowdecay. Run from the directory holding the CSVs.\n\
         import csv\n\
         import math\n\
         import matplotlib\n\
         matplotlib.use(\"Agg\")\n\
         import matplotlib.pyplot as plt\n\
         \n\
         \n\
         def column(rows, key):\n\
         \x20   out = []\n\
         \x20   for r in rows:\n\
         \x20       try:\n\
         \x20           out.append(float(r[key]))\n\
         \x20       except (KeyError, ValueError):\n\
         \x20           out.append(math.nan)\n\
         \x20   return out\n\
         \n\
         \n\
         PANELS = [\n",
    );
    for p in panels {
        let ys: Vec<String> = p.ys.iter().map(|y| py_str(y)).collect();
        s.push_str(&format!(
            "    ({}, {}, [{}], {}, {}, {}),\n",
            py_str(&p.csv),
            py_str(&p.x),
            ys.join(", "),
            py_bool(p.log_x),
            py_bool(p.log_y),
            py_str(&p.title)
        ));
    }
    s.push_str(&format!(
        "]\n\
         \n\
         fig, axes = plt.subplots(len(PANELS), 1, figsize=(7, 4 * len(PANELS)), squeeze=False)\n\
         for ax, (name, x, ys, log_x, log_y, title) in zip(axes[:, 0], PANELS):\n\
         \x20   with open(name, newline=\"\") as f:\n\
         \x20       rows = list(csv.DictReader(f))\n\
         \x20   xs = column(rows, x)\n\
         \x20   for y in ys:\n\
         \x20       vals = column(rows, y)\n\
         \x20       if log_y:\n\
         \x20           vals = [abs(v) if v != 0 else math.nan for v in vals]\n\
         \x20       ax.plot(xs, vals, marker=\"o\", ms=3, label=y)\n\
         \x20   ax.set_xscale(\"log\" if log_x else \"linear\")\n\
         \x20   ax.set_yscale(\"log\" if log_y else \"linear\")\n\
         \x20   ax.set_xlabel(x)\n\
         \x20   ax.set_title(title)\n\
         \x20   ax.legend()\n\
         fig.tight_layout()\n\
         fig.savefig({})\n",
        py_str(&format!("{stem}.png"))
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_lists_every_panel() {
        let s = script("tail", &[Panel::new("tail.csv", "n", &["tail"], "tail").log_log()]);
        assert!(s.contains("(\"tail.csv\", \"n\", [\"tail\"], True, True, \"tail\"),"));
        assert!(s.contains("fig.savefig(\"tail.png\")"));
        assert!(s.lines().all(|l| !l.starts_with('\t')));
    }
}
