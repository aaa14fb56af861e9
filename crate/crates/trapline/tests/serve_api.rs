//! HTTP service tests against a live ephemeral instance over a real run.


use trapline::config::PipelineConfig;
use trapline::fixtures::{demo_assets, fixture_corpus_dir, write_demo_fixture};
use trapline::pipeline::run_pipeline;
use trapline::serve::Service;

struct Harness {
    addr: String,
    run_id: String,
    rhino_asset_id: String,
    zebra_png: Vec<u8>,
    _input: tempfile::TempDir,
    _output: tempfile::TempDir,
}

fn start_service() -> Harness {
    let input = tempfile::tempdir().unwrap();
    let output = tempfile::tempdir().unwrap();
    write_demo_fixture(input.path(), 7).unwrap();

    let mut config = PipelineConfig::mock_defaults(
        input.path().to_path_buf(),
        output.path().to_path_buf(),
    );
    config.corpus_dir = Some(fixture_corpus_dir());
    config.run_date = Some("2024-10-23".to_string());

    let outcome = run_pipeline(&config).unwrap();
    let store = trapline::store::Store::open(output.path());
    let rhino_asset_id = store
        .read_observations()
        .unwrap()
        .iter()
        .find(|o| o.species_counts.contains_key("Rhinocerotidae"))
        .map(|o| o.asset_id.clone())
        .expect("rhino observation");
    let zebra_name = demo_assets()[1].name.clone();
    let zebra_png = std::fs::read(input.path().join(format!("{zebra_name}.png"))).unwrap();

    let service = Service::bind(config, output.path(), "127.0.0.1:0").unwrap();
    let addr = format!("http://{}", service.local_addr());
    let _threads = service.spawn(2);
    // Keep the server itself alive for the whole test process.
    std::mem::forget(service);

    Harness {
        addr,
        run_id: outcome.manifest.run_id,
        rhino_asset_id,
        zebra_png,
        _input: input,
        _output: output,
    }
}

fn post_json(url: &str, body: serde_json::Value) -> (u16, serde_json::Value) {
    let agent = ureq::AgentBuilder::new().build();
    match agent.post(url).send_json(body) {
        Ok(response) => {
            let status = response.status();
            (status, response.into_json().unwrap())
        }
        Err(ureq::Error::Status(code, response)) => {
            (code, response.into_json().unwrap_or(serde_json::json!({})))
        }
        Err(e) => panic!("transport error: {e}"),
    }
}

#[test]
fn service_surface_end_to_end() {
    let harness = start_service();

    // GET /v1/runs lists the completed run.
    let runs: serde_json::Value = ureq::get(&format!("{}/v1/runs", harness.addr))
        .call()
        .unwrap()
        .into_json()
        .unwrap();
    assert_eq!(runs.as_array().unwrap().len(), 1);
    assert_eq!(runs[0]["run_id"], serde_json::json!(harness.run_id));

    // GET /v1/report/{run_id} returns the markdown report.
    let report = ureq::get(&format!("{}/v1/report/{}", harness.addr, harness.run_id))
        .call()
        .unwrap()
        .into_string()
        .unwrap();
    assert!(report.contains("Generated on: 2024-10-23"));

    // Unknown run id is a 404.
    let missing = ureq::get(&format!("{}/v1/report/unknown", harness.addr)).call();
    match missing {
        Err(ureq::Error::Status(404, _)) => {}
        other => panic!("expected 404, got {other:?}"),
    }

    // POST /v1/ask with a bank question cites the corpus.
    let (status, body) = post_json(
        &format!("{}/v1/ask", harness.addr),
        serde_json::json!({"asset_id": harness.rhino_asset_id, "question_id": "Q1"}),
    );
    assert_eq!(status, 200);
    assert!(
        body["answer"].as_str().unwrap().contains("Near Threatened"),
        "{body}"
    );
    assert!(body["keywords"].as_array().unwrap().len() >= 2);

    // Custom question text is accepted.
    let (status, body) = post_json(
        &format!("{}/v1/ask", harness.addr),
        serde_json::json!({
            "asset_id": harness.rhino_asset_id,
            "question": "how much does it weigh"
        }),
    );
    assert_eq!(status, 200);
    assert!(body["answer"].as_str().unwrap().contains("rhinoceros"), "{body}");

    // Unknown asset is 404; malformed bodies are 422.
    let (status, _) = post_json(
        &format!("{}/v1/ask", harness.addr),
        serde_json::json!({"asset_id": "nope", "question_id": "Q1"}),
    );
    assert_eq!(status, 404);

    let agent = ureq::AgentBuilder::new().build();
    let bad = agent
        .post(&format!("{}/v1/ask", harness.addr))
        .set("Content-Type", "application/json")
        .send_string("");
    match bad {
        Err(ureq::Error::Status(422, _)) => {}
        other => panic!("expected 422, got {other:?}"),
    }

    let (status, _) = post_json(
        &format!("{}/v1/ask", harness.addr),
        serde_json::json!({"asset_id": harness.rhino_asset_id}),
    );
    assert_eq!(status, 422, "neither question_id nor question");

    // POST /v1/analyze runs one image through the pipeline.
    use base64::Engine;
    let b64 = base64::engine::general_purpose::STANDARD.encode(&harness.zebra_png);
    let (status, body) = post_json(
        &format!("{}/v1/analyze", harness.addr),
        serde_json::json!({"image_b64": b64}),
    );
    assert_eq!(status, 200);
    assert_eq!(body["blank"], serde_json::json!(false));
    assert_eq!(
        body["observation"]["species_counts"]["Equus quagga"],
        serde_json::json!(1)
    );

    let (status, _) = post_json(
        &format!("{}/v1/analyze", harness.addr),
        serde_json::json!({"image_b64": "@@@not-base64@@@"}),
    );
    assert_eq!(status, 422);
}

#[test]
fn analyze_reports_503_when_the_detector_is_down() {
    let input = tempfile::tempdir().unwrap();
    let output = tempfile::tempdir().unwrap();
    write_demo_fixture(input.path(), 7).unwrap();

    // Complete a run with mocks, then serve with an unreachable detector.
    let mut config = PipelineConfig::mock_defaults(
        input.path().to_path_buf(),
        output.path().to_path_buf(),
    );
    config.corpus_dir = Some(fixture_corpus_dir());
    config.run_date = Some("2024-10-23".to_string());
    run_pipeline(&config).unwrap();

    config.detector.mode = trapline::config::EndpointMode::Http;
    config.detector.base_url = Some("http://127.0.0.1:9".to_string());
    config.detector.timeout_secs = 1;
    let zebra_png = std::fs::read(input.path().join("img01-zebra.png")).unwrap();
    let service = Service::bind(config, output.path(), "127.0.0.1:0").unwrap();
    let addr = format!("http://{}", service.local_addr());
    let _threads = service.spawn(1);
    std::mem::forget(service);

    use base64::Engine;
    let b64 = base64::engine::general_purpose::STANDARD.encode(&zebra_png);
    let (status, body) = post_json(
        &format!("{addr}/v1/analyze"),
        serde_json::json!({"image_b64": b64}),
    );
    assert_eq!(status, 503, "{body}");
}
