use std::io::Write;

use super::{BerRow, QueryRow};
use crate::error::Result;
use crate::indicators::CalibrationSample;

pub fn write_query_csv<W: Write>(rows: &[QueryRow], mut w: W) -> Result<()> {
    writeln!(w, "variant,trial,cd_queries,qd_rotations,converged")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.variant, r.trial, r.cd_queries, r.qd_rotations, r.converged)?;
    }
    Ok(())
}

/// `t_p` is written as `inf` for perfect channel knowledge.
pub fn write_ber_csv<W: Write>(rows: &[BerRow], mut w: W) -> Result<()> {
    writeln!(w, "detector,snr_db,t_p,bits,errors,ber")?;
    for r in rows {
        let t_p = r.t_p.map_or_else(|| "inf".to_string(), |t| t.to_string());
        writeln!(w, "{},{:.16e},{},{},{},{:.16e}", r.detector, r.snr_db, t_p, r.bits, r.errors, r.ber())?;
    }
    Ok(())
}

/// All four indicators and the channel statistics behind them, one row per
/// calibration sample.
pub fn write_scatter_csv<W: Write>(samples: &[CalibrationSample], mut w: W) -> Result<()> {
    writeln!(w, "c,c1,c2,c_prime,alpha,beta1,beta2,l_opt,n_s")?;
    for s in samples {
        let i = &s.indicators;
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            i.c, i.c1, i.c2, i.c_prime, i.alpha, i.beta1, i.beta2, s.l_opt, s.n_s
        )?;
    }
    Ok(())
}
