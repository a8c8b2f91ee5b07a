use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::polygon::{Point, Polygon};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// One query with its ground-truth regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    #[serde(rename = "id")]
    pub case_id: String,
    pub query: String,
    pub regions: Vec<Polygon>,
}

impl TestCase {
    pub fn query_words(&self) -> usize {
        self.query.split_whitespace().count()
    }
}

/// One large image and the test cases annotated on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub file: String,
    pub height: usize,
    pub width: usize,
    pub cases: Vec<TestCase>,
}

impl ImageEntry {
    /// Resolves `file` against the directory holding the manifest.
    pub fn resolve(&self, base_dir: &Path) -> PathBuf {
        let p = Path::new(&self.file);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    }
}

/// A validated test manifest.
///
/// Coordinates are zero-based pixels with `x` along columns and `y` along
/// rows. Every polygon is checked against its image bounds at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub images: Vec<ImageEntry>,
}

impl Manifest {
    pub fn case_count(&self) -> usize {
        self.images.iter().map(|e| e.cases.len()).sum()
    }

    /// All cases paired with the image they belong to, in manifest order.
    pub fn cases(&self) -> impl Iterator<Item = (&ImageEntry, &TestCase)> {
        self.images.iter().flat_map(|e| e.cases.iter().map(move |c| (e, c)))
    }

    pub fn find_case(&self, case_id: &str) -> Option<(&ImageEntry, &TestCase)> {
        self.cases().find(|(_, c)| c.case_id == case_id)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawManifest = serde_json::from_str(text).map_err(|e| Error::Schema {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        raw.validate()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::from_json_str(&text)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    version: u32,
    images: Vec<RawImage>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    file: String,
    height: i64,
    width: i64,
    cases: Vec<RawCase>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    id: String,
    query: String,
    regions: Vec<Vec<[f64; 2]>>,
}

fn schema(location: String, message: impl Into<String>) -> Error {
    Error::Schema {
        location,
        message: message.into(),
    }
}

impl RawManifest {
    fn validate(self) -> Result<Manifest> {
        if self.version != MANIFEST_VERSION {
            return Err(schema(
                "version".into(),
                format!("unsupported version {}, expected {MANIFEST_VERSION}", self.version),
            ));
        }
        let mut seen = HashSet::new();
        let mut images = Vec::with_capacity(self.images.len());
        for (ii, img) in self.images.into_iter().enumerate() {
            let loc = format!("images[{ii}]");
            if img.file.is_empty() {
                return Err(schema(format!("{loc}.file"), "empty file name"));
            }
            if img.height <= 0 || img.width <= 0 {
                return Err(schema(
                    loc,
                    format!("image dimensions must be positive, got {}x{}", img.height, img.width),
                ));
            }
            let (height, width) = (img.height as usize, img.width as usize);
            let mut cases = Vec::with_capacity(img.cases.len());
            for (ci, case) in img.cases.into_iter().enumerate() {
                let loc = format!("images[{ii}].cases[{ci}]");
                if case.id.trim().is_empty() {
                    return Err(schema(format!("{loc}.id"), "empty case id"));
                }
                if !seen.insert(case.id.clone()) {
                    return Err(schema(format!("{loc}.id"), format!("duplicate case id {:?}", case.id)));
                }
                if case.query.split_whitespace().next().is_none() {
                    return Err(schema(format!("{loc}.query"), "query has no words"));
                }
                if case.regions.is_empty() {
                    return Err(schema(format!("{loc}.regions"), "at least one region is required"));
                }
                let mut regions = Vec::with_capacity(case.regions.len());
                for (ri, coords) in case.regions.into_iter().enumerate() {
                    let loc = format!("{loc}.regions[{ri}]");
                    let poly = Polygon::new(coords.iter().map(|&[x, y]| Point::new(x, y))).map_err(|e| match e {
                        Error::PolygonDegenerate { reason, .. } => Error::PolygonDegenerate {
                            location: loc.clone(),
                            reason,
                        },
                        other => other,
                    })?;
                    if let Some(p) = poly
                        .vertices()
                        .iter()
                        .find(|p| p.x < 0.0 || p.y < 0.0 || p.x > width as f64 || p.y > height as f64)
                    {
                        return Err(Error::VertexOutOfBounds {
                            location: loc,
                            x: p.x,
                            y: p.y,
                            width,
                            height,
                        });
                    }
                    regions.push(poly);
                }
                cases.push(TestCase {
                    case_id: case.id,
                    query: case.query,
                    regions,
                });
            }
            images.push(ImageEntry {
                file: img.file,
                height,
                width,
                cases,
            });
        }
        Ok(Manifest {
            version: self.version,
            images,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"version": 1, "images": [{"file": "a.png", "height": 10, "width": 12,
        "cases": [{"id": "c0", "query": "a red roof", "regions": [[[1,1],[5,1],[3,4]]]}]}]}"#;

    #[test]
    fn minimal_manifest() {
        let m = Manifest::from_json_str(MINIMAL).unwrap();
        assert_eq!(m.images.len(), 1);
        let (_, case) = m.find_case("c0").unwrap();
        assert_eq!(case.regions.len(), 1);
        assert_eq!(case.query_words(), 3);
    }

    #[test]
    fn two_vertex_polygon_is_degenerate() {
        let text = MINIMAL.replace("[[1,1],[5,1],[3,4]]", "[[1,1],[5,1]]");
        match Manifest::from_json_str(&text) {
            Err(Error::PolygonDegenerate { location, .. }) => {
                assert_eq!(location, "images[0].cases[0].regions[0]")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_bounds_vertex() {
        let text = MINIMAL.replace("[3,4]", "[3,11]");
        assert!(matches!(
            Manifest::from_json_str(&text),
            Err(Error::VertexOutOfBounds { .. })
        ));
    }

    #[test]
    fn schema_violations_name_the_field() {
        let text = MINIMAL.replace("\"query\"", "\"qry\"");
        assert!(matches!(Manifest::from_json_str(&text), Err(Error::Schema { .. })));
        let text = MINIMAL.replace("\"a red roof\"", "\"   \"");
        match Manifest::from_json_str(&text) {
            Err(Error::Schema { location, .. }) => assert_eq!(location, "images[0].cases[0].query"),
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(Manifest::from_json_str(&text), Err(Error::Schema { .. })));
        let text = MINIMAL.replace("\"height\": 10", "\"height\": 0");
        assert!(matches!(Manifest::from_json_str(&text), Err(Error::Schema { .. })));
        let text = MINIMAL.replace("\"regions\": [[[1,1],[5,1],[3,4]]]", "\"regions\": []");
        assert!(matches!(Manifest::from_json_str(&text), Err(Error::Schema { .. })));
    }

    #[test]
    fn duplicate_case_ids_rejected() {
        let text = MINIMAL.replace(
            r#"[{"id": "c0", "query": "a red roof", "regions": [[[1,1],[5,1],[3,4]]]}]"#,
            r#"[{"id": "c0", "query": "a", "regions": [[[1,1],[5,1],[3,4]]]},
                {"id": "c0", "query": "b", "regions": [[[1,1],[5,1],[3,4]]]}]"#,
        );
        assert!(matches!(Manifest::from_json_str(&text), Err(Error::Schema { .. })));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_manifest(Path::new("/nonexistent/manifest.json")),
            Err(Error::FileMissing(_))
        ));
    }

    #[test]
    fn round_trips_through_json() {
        let m = Manifest::from_json_str(MINIMAL).unwrap();
        let again = Manifest::from_json_str(&m.to_json_string().unwrap()).unwrap();
        assert_eq!(m, again);
    }
}
