//! Drive the sampler through the framed tensor protocol. The server runs on a
//! thread at the other end of a socket pair and returns its input shrunk
//! towards zero.

use std::os::unix::net::UnixStream;
use std::thread;

use ndarray::Array3;
use num_complex::Complex64;

use ddrm_refine::degradation::{DegradationModel, Design, MeasurementSet, NoiseStd};
use ddrm_refine::denoiser::protocol::{serve, Fault};
use ddrm_refine::denoiser::{external::DEFAULT_TIMEOUT, ExternalDenoiser};
use ddrm_refine::sampler::{run, SamplerConfig};
use ddrm_refine::schedule::{NoiseSchedule, ScheduleKind};

fn main() -> ddrm_refine::Result<()> {
    let (client, server) = UnixStream::pair()?;
    let server_read = server.try_clone()?;
    let handle = thread::spawn(move || {
        serve(server_read, server, Fault::None, |mut frame| {
            let s2 = frame.sigma.powi(2);
            frame.payload.iter_mut().for_each(|v| *v = (*v as f64 / (1.0 + s2)) as f32);
            frame
        })
    });

    let n = 2;
    let model = DegradationModel::shared(n)?;
    let data = Array3::from_shape_fn((n + 1, 4, 8), |(c, f, t)| Complex64::new((c + f) as f64 * 0.1, t as f64 * 0.05));
    let set = MeasurementSet::new(data, NoiseStd::uniform(0.3, n + 1), Design::Shared)?;
    let schedule = NoiseSchedule::build(ScheduleKind::Geometric, 25, 0.002, 1.0)?;

    let mut denoiser = ExternalDenoiser::from_unix_stream(client, DEFAULT_TIMEOUT)?;
    let result = run(&set, &model, &mut denoiser, &SamplerConfig::new(schedule, 3))?;
    println!("denoiser calls: {}", denoiser.calls());
    println!("x0[0, 0, 0] = {:.4}", result.x0[[0, 0, 0]]);
    drop(denoiser);

    let served = handle.join().expect("server thread").map_err(|e| ddrm_refine::Error::InvalidInput(e.to_string()))?;
    println!("server answered {served} requests");
    Ok(())
}
