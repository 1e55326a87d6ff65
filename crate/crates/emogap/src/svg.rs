//! Minimal self-contained SVG assembly for the report figures. Only the
//! handful of shapes the figures need; coordinates render with fixed
//! two-decimal formatting so output bytes are stable across runs.

/// Escape text for use inside SVG/XML content or attribute values.
pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            other => out.push(other),
        }
    }
    out
}

fn coord(value: f64) -> String {
    format!("{value:.2}")
}

/// Accumulates elements and wraps them in an `<svg>` document.
#[derive(Debug, Clone)]
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

/// Horizontal anchoring of a text element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Start,
    Middle,
    End,
}

impl Anchor {
    fn attr(self) -> &'static str {
        match self {
            Anchor::Start => "start",
            Anchor::Middle => "middle",
            Anchor::End => "end",
        }
    }
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: Option<&str>) {
        let stroke_attrs = match stroke {
            Some(color) => format!(r#" stroke="{}" stroke-width="1""#, escape(color)),
            None => String::new(),
        };
        self.body.push_str(&format!(
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"{}/>"#,
            coord(x),
            coord(y),
            coord(w),
            coord(h),
            escape(fill),
            stroke_attrs,
        ));
        self.body.push('\n');
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, dashed: bool) {
        let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
        self.body.push_str(&format!(
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="1"{}/>"#,
            coord(x1),
            coord(y1),
            coord(x2),
            coord(y2),
            escape(stroke),
            dash,
        ));
        self.body.push('\n');
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        let rendered: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{},{}", coord(*x), coord(*y)))
            .collect();
        self.body.push_str(&format!(
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            rendered.join(" "),
            escape(stroke),
        ));
        self.body.push('\n');
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: Anchor, content: &str) {
        self.text_with_attrs(x, y, size, anchor, content, "");
    }

    /// Text with extra raw attributes (e.g. a rotation transform). The
    /// caller owns the validity of `extra_attrs`.
    pub fn text_with_attrs(
        &mut self,
        x: f64,
        y: f64,
        size: f64,
        anchor: Anchor,
        content: &str,
        extra_attrs: &str,
    ) {
        self.body.push_str(&format!(
            r#"<text x="{}" y="{}" font-size="{}" font-family="sans-serif" text-anchor="{}"{}{}>{}</text>"#,
            coord(x),
            coord(y),
            coord(size),
            anchor.attr(),
            if extra_attrs.is_empty() { "" } else { " " },
            extra_attrs,
            escape(content),
        ));
        self.body.push('\n');
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            coord(self.width),
            coord(self.height),
            coord(self.width),
            coord(self.height),
            self.body,
        )
    }
}
