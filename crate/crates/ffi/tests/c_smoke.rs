//! Compiles and runs a small C program against the static library and the
//! shipped header, proving the declared ABI matches the built symbols.

use std::path::PathBuf;
use std::process::Command;

const C_PROGRAM: &str = r#"
#include <assert.h>
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "gridnav.h"

int main(void) {
  GnGrid *grid = NULL;
  assert(gn_grid_parse("000\n010\n000", &grid) == GN_STATUS_OK);

  size_t h = 0, w = 0;
  assert(gn_grid_dims(grid, &h, &w) == GN_STATUS_OK);
  assert(h == 3 && w == 3);

  int32_t obst = -1;
  assert(gn_grid_is_obstacle(grid, 1, 1, &obst) == GN_STATUS_OK && obst == 1);
  assert(gn_grid_is_obstacle(grid, 0, 0, &obst) == GN_STATUS_OK && obst == 0);

  size_t rows[2] = {1, 1};
  size_t cols[2] = {0, 2};
  GnTrajectory *traj = NULL;
  assert(gn_trajectory_new(rows, cols, 2, &traj) == GN_STATUS_OK);

  int32_t valid = -1;
  size_t br = 99, bc = 99;
  assert(gn_validate(grid, traj, &valid, &br, &bc) == GN_STATUS_OK);
  assert(valid == 0 && br == 1 && bc == 1);

  double cost = 0.0;
  assert(gn_astar_cost(grid, 1, 0, 1, 2, &cost) == GN_STATUS_OK);
  /* Every diagonal around the center obstacle is corner-cutting, so the
   * detour is four straight moves. */
  assert(fabs(cost - 4.0) < 1e-9);

  char *text = NULL;
  assert(gn_grid_to_text(grid, &text) == GN_STATUS_OK);
  assert(strcmp(text, "000\n010\n000") == 0);
  gn_string_free(text);

  assert(gn_version() != NULL);

  gn_trajectory_free(traj);
  gn_grid_free(grid);
  printf("c smoke ok\n");
  return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from the crate dir; the workspace target dir is two up.
    let mut dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    dir.pop();
    dir.pop();
    dir.join("target").join("debug")
}

#[test]
fn c_program_links_and_runs() {
    let gcc = matches!(
        Command::new("gcc").arg("--version").output(),
        Ok(out) if out.status.success()
    );
    if !gcc {
        eprintln!("skipping: gcc unavailable");
        return;
    }

    let lib = target_dir().join("libgridnav_ffi.a");
    assert!(
        lib.exists(),
        "static library missing at {} (build the workspace first)",
        lib.display()
    );

    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = tmp.path().join("smoke");

    let include = {
        let mut dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
        dir.pop();
        dir.pop();
        dir.join("include")
    };

    let compile = Command::new("gcc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .arg("-lpthread")
        .arg("-ldl")
        .arg("-lm")
        .arg("-o")
        .arg(&exe)
        .output()
        .expect("gcc invocation failed");
    assert!(
        compile.status.success(),
        "compile failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&exe).output().expect("smoke binary failed to start");
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "c smoke ok");
}
