//! Geographic points and the lat/lon boxes of quadtree regions.

use std::fmt;

use crate::ar::Term;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, String> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(format!("coordinates ({lat}, {lon}) out of bounds"));
        }
        Ok(GeoPoint { lat, lon })
    }

    /// Parses `LAT,LON`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let (lat, lon) = s
            .split_once(',')
            .ok_or_else(|| format!("expected LAT,LON, got {s:?}"))?;
        let lat: f64 = lat.trim().parse().map_err(|_| format!("bad latitude {lat:?}"))?;
        let lon: f64 = lon.trim().parse().map_err(|_| format!("bad longitude {lon:?}"))?;
        GeoPoint::new(lat, lon)
    }

    /// `lat:` and `long:` terms describing this point.
    pub fn terms(&self) -> Vec<Term> {
        [format!("lat:{}", self.lat), format!("long:{}", self.lon)]
            .iter()
            .filter_map(|t| Term::parse(t).ok())
            .collect()
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.lat, self.lon)
    }
}

/// Closed lat/lon box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GeoBox {
    pub const WORLD: GeoBox = GeoBox {
        lat_min: -90.0,
        lat_max: 90.0,
        lon_min: -180.0,
        lon_max: 180.0,
    };

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.lat_min..=self.lat_max).contains(&p.lat)
            && (self.lon_min..=self.lon_max).contains(&p.lon)
    }

    pub fn mid(&self) -> (f64, f64) {
        (
            (self.lat_min + self.lat_max) / 2.0,
            (self.lon_min + self.lon_max) / 2.0,
        )
    }

    /// Quadrant digit of a point inside the box: bit 1 set for the northern
    /// half, bit 0 for the eastern half. Points on a shared edge go to the
    /// smaller digit.
    pub fn quadrant_of(&self, p: GeoPoint) -> u8 {
        let (mlat, mlon) = self.mid();
        (u8::from(p.lat > mlat) << 1) | u8::from(p.lon > mlon)
    }

    pub fn child(&self, digit: u8) -> GeoBox {
        let (mlat, mlon) = self.mid();
        let (lat_min, lat_max) = if digit & 2 != 0 {
            (mlat, self.lat_max)
        } else {
            (self.lat_min, mlat)
        };
        let (lon_min, lon_max) = if digit & 1 != 0 {
            (mlon, self.lon_max)
        } else {
            (self.lon_min, mlon)
        };
        GeoBox {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        }
    }

    pub fn area(&self) -> f64 {
        (self.lat_max - self.lat_min) * (self.lon_max - self.lon_min)
    }
}
