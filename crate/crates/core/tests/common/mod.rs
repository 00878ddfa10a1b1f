#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use lfag_core::miner::{load_dir, parse_article, ParsedArticle};
use lfag_core::retriever::path_to_file_url;
use lfag_core::text::Lang;

pub const SOURCES_MARK: &str = "@SOURCES@";

pub fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus")
}

/// A copy of the fixture corpus whose citation URLs point at the copied
/// source pages.
pub struct Corpus {
    pub dir: tempfile::TempDir,
}

impl Corpus {
    pub fn materialize() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let src = fixture_root();
        let sources = dir.path().join("sources");
        let articles = dir.path().join("articles");
        std::fs::create_dir_all(&sources).unwrap();
        std::fs::create_dir_all(&articles).unwrap();
        for entry in std::fs::read_dir(src.join("sources")).unwrap() {
            let p = entry.unwrap().path();
            std::fs::copy(&p, sources.join(p.file_name().unwrap())).unwrap();
        }
        let base = path_to_file_url(&sources).expect("file url");
        for entry in std::fs::read_dir(src.join("articles")).unwrap() {
            let p = entry.unwrap().path();
            let body = std::fs::read_to_string(&p).unwrap().replace(SOURCES_MARK, &base);
            std::fs::write(articles.join(p.file_name().unwrap()), body).unwrap();
        }
        Self { dir }
    }

    pub fn articles_dir(&self) -> PathBuf {
        self.dir.path().join("articles")
    }

    pub fn sources_dir(&self) -> PathBuf {
        self.dir.path().join("sources")
    }

    pub fn parsed(&self) -> Vec<ParsedArticle> {
        load_dir(&self.articles_dir(), Lang::En)
            .unwrap()
            .iter()
            .map(|d| parse_article(d).unwrap())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
    pub at: Instant,
}

pub struct Reply {
    pub status: u16,
    pub content_type: &'static str,
    pub body: String,
    /// Sleep before answering, to provoke client timeouts.
    pub delay_ms: u64,
}

impl Reply {
    pub fn json(status: u16, body: serde_json::Value) -> Self {
        Self { status, content_type: "application/json", body: body.to_string(), delay_ms: 0 }
    }

    pub fn html(body: &str) -> Self {
        Self { status: 200, content_type: "text/html", body: body.to_string(), delay_ms: 0 }
    }

    pub fn status(status: u16) -> Self {
        Self { status, content_type: "text/plain", body: String::new(), delay_ms: 0 }
    }
}

type Handler = dyn Fn(&Request) -> Reply + Send + Sync;

/// One-connection-per-request HTTP/1.1 server on a loopback port. Every
/// request is logged in arrival order.
pub struct FakeServer {
    pub base: String,
    pub log: Arc<Mutex<Vec<Request>>>,
    stop: Arc<AtomicBool>,
}

impl FakeServer {
    pub fn start(handler: impl Fn(&Request) -> Reply + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let base = format!("http://{}", listener.local_addr().unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let (log2, stop2) = (log.clone(), stop.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let (handler, log) = (handler.clone(), log2.clone());
                std::thread::spawn(move || serve(stream, &*handler, &log));
            }
        });
        Self { base, log, stop }
    }

    pub fn requests(&self) -> Vec<Request> {
        self.log.lock().unwrap().clone()
    }

    pub fn count(&self, path: &str) -> usize {
        self.requests().iter().filter(|r| r.path == path).count()
    }
}

impl Drop for FakeServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.base.trim_start_matches("http://"));
    }
}

fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<Request>>) {
    let at = Instant::now();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut headers = Vec::new();
    let mut len = 0usize;
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 || h.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = h.trim_end().split_once(':') {
            let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
            if k == "content-length" {
                len = v.parse().unwrap_or(0);
            }
            headers.push((k, v));
        }
    }
    let mut body = vec![0u8; len];
    let _ = reader.read_exact(&mut body);
    let req = Request { method, path, headers, body: String::from_utf8_lossy(&body).into_owned(), at };
    log.lock().unwrap().push(req.clone());
    let reply = handler(&req);
    if reply.delay_ms > 0 {
        std::thread::sleep(std::time::Duration::from_millis(reply.delay_ms));
    }
    let mut stream = stream;
    let head = format!(
        "HTTP/1.1 {} X\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        reply.status,
        reply.content_type,
        reply.body.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(reply.body.as_bytes());
    let _ = stream.flush();
}

/// Output of every build stage over one corpus.
pub struct Built {
    pub articles: Vec<ParsedArticle>,
    pub dataset: lfag_core::corpus::Dataset,
    pub retrieve: lfag_core::retriever::RetrieveOutput,
    pub annotate: lfag_core::annotator::AnnotateOutput,
}

/// Offline fetcher: no rate limit, no robots lookups.
pub fn offline_fetcher() -> lfag_core::retriever::Fetcher {
    lfag_core::retriever::Fetcher::new(lfag_core::retriever::FetchPolicy {
        per_host_rate: 0.0,
        respect_robots: false,
        ..Default::default()
    })
}

/// mine, retrieve and annotate with the fallback providers.
pub fn build(corpus: &Corpus, seed: u64) -> Built {
    use lfag_core::annotator::{annotate_records, AnnotateOptions, TemplateBank};
    use lfag_core::miner::extract_outline;
    use lfag_core::providers::Providers;
    use lfag_core::retriever::{retrieve_abstract_sets, RetrieveConfig};

    let providers = Providers::fallback();
    let articles = corpus.parsed();
    let outlines = articles.iter().map(extract_outline).collect();
    let retrieve =
        retrieve_abstract_sets(&articles, &offline_fetcher(), providers.embedder.as_ref(), &RetrieveConfig::default())
            .unwrap();
    let annotate = annotate_records(
        &retrieve.records,
        providers.generator.as_ref(),
        &TemplateBank::default_bank(),
        &AnnotateOptions::seeded(seed),
    )
    .unwrap();
    let dataset = lfag_core::corpus::Dataset {
        outlines,
        abstract_sets: retrieve.records.clone(),
        qa: annotate.records.clone(),
    };
    Built { articles, dataset, retrieve, annotate }
}

/// Cleaner thresholds scaled to the small fixture articles.
pub fn fixture_cleaner_config() -> lfag_core::cleaner::CleanerConfig {
    lfag_core::cleaner::CleanerConfig { min_article_words: 40, min_references: 3, ..Default::default() }
}
pub mod naive;

pub const MODES: [lfag_core::pipelines::PipelineMode; 4] = [
    lfag_core::pipelines::PipelineMode::Direct,
    lfag_core::pipelines::PipelineMode::Web,
    lfag_core::pipelines::PipelineMode::Local,
    lfag_core::pipelines::PipelineMode::Grounded,
];

pub fn seeded_pipeline_config(seed: u64) -> lfag_core::pipelines::PipelineConfig {
    lfag_core::pipelines::PipelineConfig {
        gen: lfag_core::providers::GenParams { seed, ..Default::default() },
        timestamp: Some(lfag_core::annotator::FIXED_TIMESTAMP.to_string()),
        ..Default::default()
    }
}

/// Every stage over the fixture corpus, written under `out`: the cleaned
/// dataset, both stage reports, and one generated article per topic and
/// mode as JSON and markdown.
pub fn full_run(corpus: &Corpus, out: &Path, seed: u64) {
    use lfag_core::cleaner::clean;
    use lfag_core::corpus::{to_sorted_json_pretty, write_jsonl};
    use lfag_core::pipelines::{build_local_index, run_pipeline, PipelineInputs};
    use lfag_core::providers::{FixtureSearch, Providers};

    let built = build(corpus, seed);
    std::fs::create_dir_all(out).unwrap();
    write_jsonl(&out.join(lfag_core::miner::ARTICLES_FILE), &built.articles).unwrap();
    std::fs::write(out.join("retrieve_report.json"), to_sorted_json_pretty(&built.retrieve.failures)).unwrap();
    std::fs::write(out.join("annotate_report.json"), to_sorted_json_pretty(&built.annotate.rejected)).unwrap();
    let providers = Providers::fallback();
    let (cleaned, report) =
        clean(built.dataset, Some(&built.articles), &fixture_cleaner_config(), &providers, None).map_err(|a| a.error).unwrap();
    cleaned.write_dir(out).unwrap();
    std::fs::write(out.join("clean_report.json"), to_sorted_json_pretty(&report)).unwrap();

    let web = providers.clone().with_search(Arc::new(FixtureSearch::from_dir(&corpus.sources_dir()).unwrap()));
    let index = build_local_index(&cleaned.abstract_sets, Default::default()).unwrap();
    let fetcher = offline_fetcher();
    let cfg = seeded_pipeline_config(seed);
    let gen_dir = out.join("generated");
    std::fs::create_dir_all(&gen_dir).unwrap();
    for article in &built.articles {
        let grounded: Vec<_> = cleaned.abstract_sets.iter().filter(|s| s.topic == article.topic).cloned().collect();
        for mode in MODES {
            let inputs = PipelineInputs { index: Some(&index), fetcher: Some(&fetcher), grounded: Some(&grounded) };
            let generated = run_pipeline(&article.topic, mode, &cfg, &web, inputs).unwrap();
            let stem = format!("{}.{mode}", article.topic.replace(' ', "_"));
            std::fs::write(gen_dir.join(format!("{stem}.json")), to_sorted_json_pretty(&generated)).unwrap();
            std::fs::write(gen_dir.join(format!("{stem}.md")), generated.to_markdown()).unwrap();
        }
    }
}

/// Relative path to file bytes for every file under `dir`.
pub fn snapshot(dir: &Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn wiki(topic: &str, body: &str) -> ParsedArticle {
    use lfag_core::miner::{SourceDocument, SourceFormat};
    parse_article(&SourceDocument {
        topic: topic.into(),
        lang: Lang::En,
        body: body.into(),
        format: SourceFormat::Wikitext,
        source_url: format!("{topic}.wiki"),
    })
    .unwrap()
}

fn filler(words: usize) -> String {
    (0..words).map(|i| ["alpha", "beta", "gamma", "delta"][i % 4]).collect::<Vec<_>>().join(" ")
}

/// Records crafted so the cleaner drops exactly one per reason code and
/// keeps three: the rich outline, one abstract set and its QA pair.
pub fn engineered_fixture() -> (lfag_core::corpus::Dataset, Vec<ParsedArticle>) {
    use lfag_core::corpus::{Abstract, AbstractSetRecord, Citation, Dataset, Provenance, QaRecord};
    use lfag_core::miner::extract_outline;
    use lfag_core::text::content_id;

    let refs = "<ref>[http://a.test/1 a]</ref><ref>[http://a.test/2 b]</ref><ref>[http://a.test/3 c]</ref>";
    let articles = vec![
        wiki("Thin Topic", &format!("Thin lead.{refs}\n== Only ==\nShort body.")),
        wiki("Sparse Topic", &format!("Sparse lead.<ref>[http://a.test/4 d]</ref>\n== Only ==\n{}", filler(60))),
        wiki("Rich Topic", &format!("Rich lead.{refs}\n== Body ==\n{}", filler(60))),
    ];
    let outlines = articles.iter().map(extract_outline).collect();

    let path = vec!["Body".to_string()];
    let set = |paragraph: &str, abstract_text: &str, relevance: f64| {
        let url = format!("http://a.test/{}", paragraph.len());
        AbstractSetRecord {
            id: content_id("as", "Rich Topic", &path, paragraph),
            article_id: "Rich Topic.wiki".into(),
            topic: "Rich Topic".into(),
            section_path: path.clone(),
            paragraph: paragraph.into(),
            citations: vec![Citation { url: url.clone(), title: None }],
            abstracts: vec![Abstract {
                text: abstract_text.into(),
                source_url: url,
                source_sentence_indices: vec![0],
                relevance: Some(relevance),
            }],
        }
    };
    let low = set("Grace Hopper built compilers.", "Grace Hopper built compilers.", 0.1);
    let uncovered = set("Zanzibar Quarrington visited Kyoto.", "Ada Lovelace wrote notes.", 0.9);
    let good = set("Ada Lovelace wrote notes.", "Ada Lovelace wrote notes on the engine.", 0.9);
    let qa = |paragraph: &str, answer_words: usize, abstracts: Vec<Abstract>| QaRecord {
        id: content_id("qa", "Rich Topic", &path, paragraph),
        topic: "Rich Topic".into(),
        heading_path: path.clone(),
        question: "What did Ada Lovelace write?".into(),
        answer: filler(answer_words),
        abstracts,
        template_id: "prompt1-short".into(),
        provenance: Provenance { model: "fixture".into(), timestamp: "1970-01-01T00:00:00Z".into() },
    };
    let kept_qa = qa("Ada Lovelace wrote notes.", 200, good.abstracts.clone());
    let short_qa = qa("Some other paragraph.", 10, good.abstracts.clone());
    let data = Dataset { outlines, abstract_sets: vec![low, uncovered, good], qa: vec![kept_qa, short_qa] };
    (data, articles)
}

/// Ten QA lines, all valid except the sixth, whose answer is 140 words.
pub fn qa_lines_with_one_short_answer() -> Vec<String> {
    use lfag_core::corpus::{to_sorted_json, Abstract, Provenance, QaRecord};
    (0..10)
        .map(|i| {
            let words = if i == 5 { 140 } else { 150 + i * 7 };
            to_sorted_json(&QaRecord {
                id: format!("qa-{i:024}"),
                topic: "Topic".into(),
                heading_path: vec!["Topic".into()],
                question: format!("Question {i}?"),
                answer: filler(words),
                abstracts: vec![Abstract {
                    text: "Source text.".into(),
                    source_url: "http://a.test/1".into(),
                    source_sentence_indices: vec![0, 2],
                    relevance: Some(0.5),
                }],
                template_id: "prompt1-medium".into(),
                provenance: Provenance { model: "m".into(), timestamp: "1970-01-01T00:00:00Z".into() },
            })
        })
        .collect()
}
