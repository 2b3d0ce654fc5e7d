//! The HTTP click pipeline without the server: scene, click, timed
//! detection and the JSON a client would receive.

use regiongrasp::eval::SceneSnapshot;
use regiongrasp::geom::CameraModel;
use regiongrasp::scene::{default_library, generate_clutter};
use regiongrasp_service::pipeline::{detect, Guide};

fn main() -> regiongrasp::Result<()> {
    let snap = SceneSnapshot::new(generate_clutter(8, 4, &default_library(), CameraModel::default())?);
    let (id, _) = snap.image.visibility().into_iter().max_by_key(|&(_, n)| n).expect("visible object");
    let i = snap.image.ids.iter().position(|&x| x == id).expect("pixel of object");
    let (u, v) = ((i as u32 % snap.image.width) as f64 + 2.0, (i as u32 / snap.image.width) as f64 + 2.0);

    let (det, timings) = detect(&snap, &Guide::Click { u, v }, 5)?;
    println!("click ({u}, {v}) on object {id}: {:?}", timings);
    println!("{}", serde_json::to_string_pretty(&det).expect("serializable"));
    Ok(())
}
