from .toysum import FAILURE_PENALTY, error_heatmap, write_grid_csv
import PIL.Image
import numpy as np
import pathlib as pl


class COLORS(object):
    WHITE = 255
    BLACK = 0


DEFAULT_SCALE = 1


def error_to_gray(errors, penalty=FAILURE_PENALTY):
    """
    Maps error 0 to white (255) and errors at or above `penalty` to black,
    linearly in between, rounding half to even.
    """
    err = np.clip(np.asarray(errors, dtype=np.float64), 0, penalty)
    gray = np.round(COLORS.WHITE * (1.0 - err / penalty))
    return gray.astype(np.uint8)


class HeatMap(object):
    """
    Grayscale rendering of a grid prediction's per-point error. Row x1,
    column x2, so the top-left pixel is 0 + 0.
    """

    def __init__(self, grid, penalty=FAILURE_PENALTY):
        self.grid = grid
        self.penalty = penalty
        self.errors = error_heatmap(grid, penalty)
        self.pixels = error_to_gray(self.errors, penalty)

    @property
    def image(self):
        return PIL.Image.fromarray(self.pixels)

    def scaled(self, scale=DEFAULT_SCALE):
        im = self.image
        if scale == 1:
            return im
        w, h = im.size
        return im.resize((w * scale, h * scale), PIL.Image.NEAREST)

    def save(self, fp, format=None, scale=DEFAULT_SCALE, **params):
        """
        Saves the heat map. A `.pgm` path (or format "PPM") gives a binary
        P5 graymap; other extensions go through PIL's writer of that name.
        """
        if isinstance(fp, (str, pl.Path)):
            fp = pl.Path(fp)
            fp.parent.mkdir(parents=True, exist_ok=True)
            if format is None and fp.suffix.lower() == ".pgm":
                format = "PPM"
        self.scaled(scale).save(fp, format, **params)
        return fp


def save_stage_grid(out_dir, stem, grid, penalty=FAILURE_PENALTY):
    """
    Writes `{stem}.csv` and `{stem}.pgm` under `out_dir`; returns both paths.
    """
    out_dir = pl.Path(out_dir)
    csv_path = write_grid_csv(out_dir / f"{stem}.csv", grid, penalty)
    pgm_path = HeatMap(grid, penalty).save(out_dir / f"{stem}.pgm")
    return csv_path, pgm_path


def read_pgm(path):
    """
    Loads a graymap back as a uint8 array (rows are x1).
    """
    with PIL.Image.open(path) as im:
        return np.array(im.convert("L"))
