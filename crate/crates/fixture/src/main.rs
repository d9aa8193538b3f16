//! Runs the fixture service in the foreground.
//!
//! Usage: `happypath-fixture [--bind ADDR] [--defect NAME]... [--print-spec]`

use happypath_fixture::{Defects, FixtureServer, OPENAPI_YAML};

fn main() {
    let mut bind = "127.0.0.1:8080".to_string();
    let mut defects = Defects::default();
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--bind" => bind = args.next().unwrap_or_else(|| usage("--bind needs a value")),
            "--defect" => match args.next().as_deref() {
                Some("accept-inverted-dates") => defects.accept_inverted_dates = true,
                Some("accept-wrong-room-type") => defects.accept_wrong_room_type = true,
                Some("crash-on-wrong-room-type") => defects.crash_on_wrong_room_type = true,
                other => usage(&format!("unknown defect {other:?}")),
            },
            "--print-spec" => {
                print!("{OPENAPI_YAML}");
                return;
            }
            other => usage(&format!("unexpected argument {other:?}")),
        }
    }
    let server = FixtureServer::spawn_on(&bind, defects).unwrap_or_else(|e| {
        eprintln!("cannot bind {bind}: {e}");
        std::process::exit(1);
    });
    println!("fixture listening on {}", server.base_url());
    server.join();
}

fn usage(msg: &str) -> ! {
    eprintln!("{msg}");
    eprintln!(
        "usage: happypath-fixture [--bind ADDR] [--defect accept-inverted-dates|accept-wrong-room-type|crash-on-wrong-room-type]... [--print-spec]"
    );
    std::process::exit(2);
}
