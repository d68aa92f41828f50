use nalgebra::UnitQuaternion;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Euler {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

pub fn quat_to_euler(q: &UnitQuaternion<f64>) -> Euler {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Euler {
        roll: (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y)),
        pitch: (2.0 * (w * y - z * x)).clamp(-1.0, 1.0).asin(),
        yaw: (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z)),
    }
}
