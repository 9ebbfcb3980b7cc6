//! Seeded synthetic corpus: papers grouped into keyword themes, so that
//! similarity search and projections have structure to find.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::PaperRecord;
use crate::text;

pub struct Theme {
    pub name: &'static str,
    pub subjects: &'static [&'static str],
    pub methods: &'static [&'static str],
    pub keywords: &'static [&'static str],
    pub findings: &'static [&'static str],
}

pub const THEMES: &[Theme] = &[
    Theme {
        name: "geographic visualization",
        subjects: &["Geographic Data", "Spatial Maps", "Cartographic Views", "Geospatial Layers", "Terrain Models", "Urban Mobility Maps"],
        methods: &["Choropleth Design", "Map Projections", "Spatial Aggregation", "Flow Maps", "Geographic Science Visualization"],
        keywords: &["geographic visualization", "cartography", "maps", "geospatial", "spatial analysis", "GIS", "choropleth", "geography"],
        findings: &["map readers compare regions faster", "spatial aggregation hides local geographic variation", "projection choice changes perceived area on maps", "geospatial layers support exploratory geography"],
    },
    Theme {
        name: "multiverse analysis",
        subjects: &["Analytic Decisions", "Multiverse Analyses", "Garden of Forking Paths", "Robustness Checks", "Specification Curves"],
        methods: &["Multiverse Visualization", "Decision Trees of Analyses", "Sensitivity Exploration", "Explorable Multiverse Reports"],
        keywords: &["multiverse analysis", "robustness", "analytic flexibility", "statistics", "reproducibility", "specification curve"],
        findings: &["analytic decisions change conclusions", "multiverse reports expose fragile effects", "robustness across specifications increases trust", "analysts underestimate analytic flexibility"],
    },
    Theme {
        name: "grounded theory",
        subjects: &["Qualitative Interviews", "Grounded Theory Studies", "Field Observations", "Practitioner Accounts", "Coding Practices"],
        methods: &["Open Coding", "Thematic Analysis", "Constant Comparison", "Memo Writing", "Qualitative Synthesis"],
        keywords: &["grounded theory", "qualitative methods", "interviews", "coding", "thematic analysis", "practitioners"],
        findings: &["interviews reveal tacit practices", "coding frames emerge from constant comparison", "practitioners adapt tools to local needs", "qualitative themes inform tool design"],
    },
    Theme {
        name: "graph visualization",
        subjects: &["Network Layouts", "Large Graphs", "Node-Link Diagrams", "Dynamic Networks", "Hierarchies"],
        methods: &["Force-Directed Layout", "Edge Bundling", "Matrix Representations", "Graph Sampling", "Multilevel Layout"],
        keywords: &["graph visualization", "networks", "layout", "edge bundling", "node-link", "graph drawing"],
        findings: &["edge bundling reduces clutter in dense networks", "matrix views outperform node-link diagrams for dense graphs", "layout stability helps track dynamic networks", "graph sampling preserves community structure"],
    },
    Theme {
        name: "uncertainty visualization",
        subjects: &["Uncertain Forecasts", "Probabilistic Data", "Error Bars", "Ensemble Predictions", "Risk Communication"],
        methods: &["Quantile Dotplots", "Hypothetical Outcome Plots", "Uncertainty Encodings", "Probability Displays"],
        keywords: &["uncertainty visualization", "probability", "risk", "forecasts", "error bars", "ensembles"],
        findings: &["frequency framing improves probability judgments", "error bars are often misread", "animated outcomes convey variability", "forecast users prefer discrete encodings"],
    },
    Theme {
        name: "visual analytics for machine learning",
        subjects: &["Neural Network Models", "Classifier Errors", "Training Dynamics", "Model Explanations", "Embedding Spaces"],
        methods: &["Interactive Model Inspection", "Feature Attribution Views", "Confusion Matrix Exploration", "Embedding Projection"],
        keywords: &["machine learning", "visual analytics", "explainability", "neural networks", "model debugging", "interpretability"],
        findings: &["interactive inspection exposes model errors", "attribution views help debug classifiers", "training dynamics reveal overfitting early", "embedding projections expose label noise"],
    },
    Theme {
        name: "text visualization",
        subjects: &["Document Collections", "Topic Models", "Word Embeddings", "Literature Corpora", "Scientific Abstracts"],
        methods: &["Topic Visualization", "Word Clouds", "Semantic Maps", "Document Clustering", "Text Summarization Views"],
        keywords: &["text visualization", "topic modeling", "documents", "natural language", "word embeddings", "literature search"],
        findings: &["topic views speed up corpus exploration", "semantic maps group related documents", "word clouds mislead comparison tasks", "linked views support literature search"],
    },
    Theme {
        name: "immersive analytics",
        subjects: &["Virtual Reality Environments", "Augmented Reality Displays", "Immersive Workspaces", "Head-Mounted Displays", "Spatial Interfaces"],
        methods: &["Immersive Visualization", "Embodied Interaction", "Collaborative Immersion", "Stereoscopic Rendering"],
        keywords: &["immersive analytics", "virtual reality", "augmented reality", "embodied interaction", "3D visualization", "collaboration"],
        findings: &["immersion aids spatial understanding", "embodied interaction reduces navigation effort", "collaborators share views more easily in virtual reality", "stereoscopic depth helps dense point clouds"],
    },
    Theme {
        name: "color perception",
        subjects: &["Color Palettes", "Colormaps", "Perceptual Scales", "Color Vision Deficiency", "Luminance Contrast"],
        methods: &["Perceptual Experiments", "Colormap Design", "Crowdsourced Studies", "Color Discrimination Models"],
        keywords: &["color perception", "colormaps", "perception", "palettes", "crowdsourcing", "luminance"],
        findings: &["rainbow colormaps distort perceived order", "luminance drives perceived magnitude", "palette size limits discriminability", "color deficient viewers need adapted palettes"],
    },
    Theme {
        name: "parallel program performance",
        subjects: &["Parallel Programs", "HPC Traces", "Performance Profiles", "Supercomputer Jobs", "Communication Patterns"],
        methods: &["Trace Visualization", "Performance Analysis", "Timeline Views", "Call Graph Exploration", "Hardware Counter Analysis"],
        keywords: &["performance visualization", "parallel computing", "HPC", "traces", "profiling", "MPI"],
        findings: &["trace timelines reveal load imbalance", "communication views expose bottlenecks", "profiles guide optimization of parallel code", "aggregated traces scale to large jobs"],
    },
];

pub const VENUES: &[&str] = &[
    "IEEE Transactions on Visualization and Computer Graphics",
    "Computer Graphics Forum",
    "Proceedings of the ACM CHI Conference on Human Factors in Computing Systems",
    "IEEE Pacific Visualization Symposium",
    "Information Visualization",
    "ACM Transactions on Computer-Human Interaction",
    "Proceedings of the IEEE Visualization Conference",
    "EuroVis Short Papers",
    "Journal of Visualization",
    "Cartography and Geographic Information Science",
    "ACM Symposium on User Interface Software and Technology",
    "Visual Informatics",
];

const FIRST_NAMES: &[&str] = &[
    "Ada", "Alan", "Grace", "Edsger", "Barbara", "Donald", "Frances", "Niklaus", "Radia", "Ken", "Margaret", "John", "Karen",
    "Leslie", "Shafi", "Tim", "Sophie", "Yukihiro", "Ines", "Rahul", "Mei", "Omar", "Lena", "Tariq",
];

const SURNAMES: &[&str] = &[
    "Lovelace", "Turing", "Hopper", "Dijkstra", "Liskov", "Knuth", "Allen", "Wirth", "Perlman", "Thompson", "Hamilton",
    "McCarthy", "Jones", "Lamport", "Goldwasser", "Berners", "Wilson", "Matsumoto", "Garcia", "Gupta", "Chen", "Haddad",
    "Novak", "Rahman", "Okafor", "Silva", "Kowalski", "Larsen",
];

const TITLE_PATTERNS: &[&str] = &[
    "{method} for {subject}",
    "Understanding {subject} through {method}",
    "{subject}: A Study of {method}",
    "Rethinking {method} in {subject}",
    "Evaluating {method} with {subject}",
    "{method} at Scale: Lessons from {subject}",
];

const OPENERS: &[&str] = &["We present", "This paper studies", "We investigate", "We propose", "We report on"];

/// A generated corpus with the theme index of each record.
pub struct SampleCorpus {
    pub records: Vec<PaperRecord>,
    pub themes: Vec<usize>,
}

/// `n` records with ids `p1..pn`; themes assigned round-robin. The same
/// `(n, seed)` always yields the same records.
pub fn generate(n: usize, seed: u64) -> SampleCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen_titles = HashSet::new();
    let mut records = Vec::with_capacity(n);
    let mut themes = Vec::with_capacity(n);
    for i in 0..n {
        let t = i % THEMES.len();
        let theme = &THEMES[t];
        let year = rng.random_range(1995..=2023);
        let mut title = String::new();
        for attempt in 0.. {
            let pattern = TITLE_PATTERNS.choose(&mut rng).expect("patterns");
            let candidate = pattern
                .replace("{method}", theme.methods.choose(&mut rng).expect("methods"))
                .replace("{subject}", theme.subjects.choose(&mut rng).expect("subjects"));
            let candidate = if attempt < 8 { candidate } else { format!("{candidate}, Part {}", attempt - 6) };
            if seen_titles.insert(text::normalize(&candidate)) {
                title = candidate;
                break;
            }
        }
        let count = rng.random_range(3..=5);
        let mut keywords: Vec<String> = theme.keywords.choose_multiple(&mut rng, count).map(|s| s.to_string()).collect();
        keywords.shuffle(&mut rng);
        let findings: Vec<&str> = theme.findings.choose_multiple(&mut rng, 2).copied().collect();
        let abstract_text = format!(
            "{} {} for {}. Our results show that {}, and that {}. We discuss implications for {}.",
            OPENERS.choose(&mut rng).expect("openers"),
            theme.methods.choose(&mut rng).expect("methods").to_lowercase(),
            theme.subjects.choose(&mut rng).expect("subjects").to_lowercase(),
            findings[0],
            findings[1],
            theme.name,
        );
        let author_count = rng.random_range(1..=4);
        let authors = (0..author_count)
            .map(|_| format!("{} {}", FIRST_NAMES.choose(&mut rng).expect("names"), SURNAMES.choose(&mut rng).expect("names")))
            .collect();
        let id = format!("p{}", i + 1);
        records.push(PaperRecord {
            source_url: Some(format!("https://example.org/papers/{id}")),
            id,
            title,
            abstract_text,
            authors,
            keywords,
            venue: VENUES.choose(&mut rng).expect("venues").to_string(),
            year: Some(year),
            citation_count: Some(rng.random_range(0..500)),
        });
        themes.push(t);
    }
    SampleCorpus { records, themes }
}
