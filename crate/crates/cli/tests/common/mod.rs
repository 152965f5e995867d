#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use dermrl_cli::service::{router, AppState};
use dermrl_core::reward::RewardConfig;
use dermrl_core::taxonomy::TaxonomyTree;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

/// Serves `app` on an ephemeral port from a background runtime.
pub fn spawn(app: Router) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

pub fn spawn_service(tree: TaxonomyTree) -> SocketAddr {
    spawn(router(Arc::new(AppState { tree, reward: RewardConfig::default() })))
}
