import logging
import tempfile
from pathlib import Path

import numpy as np

import pyseqhand as psh


def main():
    logging.basicConfig(level=logging.INFO)

    # random natural-ish poses: every articulated joint bends about 0.5 rad on average
    model = psh.default_model()
    rng = np.random.default_rng(0)
    poses = [model.joints_fk(rng.normal(0, 0.3, 45)) for _ in range(2000)]

    try:
        with tempfile.TemporaryDirectory() as tmp:
            db_path = Path(tmp) / "poses.txt"
            psh.save_db(psh.PoseDB.from_joints(poses), db_path)

            job = psh.GenJob(db_path=db_path, output_dir=Path(tmp) / "out", sequences=100, workers=8)
            prof = psh.Profiler(sample_sequences=8)
            psh.dataset.DatasetGenerator(job, progress=True, profiler=prof).run()

            print(psh.inspect_dataset(job.output_dir).summary())
            prof.max_elapsed(120)
    except psh.profiler.ProfileException as exc:
        print(exc)


# worker processes re-import this file
if __name__ == "__main__":
    main()
