import numpy as np

from vlcorner.geometry import LightAnnotation, LightType, Point, VehicleBox


# one "PASS|FAIL <criterion>: <detail>" line per acceptance criterion
ACCEPTANCE_LINES = []


def report_criterion(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def make_annotation(corners=((90, 90), (110, 90), (110, 106), (90, 106)),
                    box=(40, 40, 200, 160), center=(100, 98), light_type="RL", image="img.png"):
    return LightAnnotation(
        image=image,
        vehicle=VehicleBox(*box),
        light_type=LightType(light_type),
        center=Point(*center),
        corners=tuple(None if c is None else Point(*c) for c in corners),
    )


def random_image(rng, height=240, width=320):
    # strictly positive so zero padding is unambiguous
    return rng.integers(1, 256, size=(height, width, 3), dtype=np.uint8)


def gradcheck_batch(rng, n=4, size=32):
    """Random float64 crops, targets and visibility masks for gradient checks."""
    crops = rng.uniform(0, 1, (n, size, size, 3))
    mask = rng.random((n, 4)) < 0.75
    mask[:, 0] = True
    targets = np.where(mask[..., None], rng.uniform(-0.8, 0.8, (n, 4, 2)), 0.0)
    return crops, targets, mask


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)


def layer_gradient_errors(model, params, crops, targets, mask, rng, per_layer=64, step=1e-4):
    """Relative errors of analytic vs central-difference gradients, per layer type.

    conv and dense perturb parameters; tanh perturbs each tanh input and pool
    perturbs the pooling input, so every op's backward rule is exercised.
    """
    from vlcorner import autograd as ag

    def loss(p, perturb=None):
        pred, _ = model.graph(p, crops, perturb=perturb)
        return float(ag.masked_corner_loss(pred, targets, mask).data)

    taps = {}
    pred, pt = model.graph(params, crops, requires_grad=True, taps=taps)
    out = ag.masked_corner_loss(pred, targets, mask)
    out.backward()

    def param_coords(names, k):
        sizes = np.array([params[n].size for n in names])
        picks = rng.choice(sizes.sum(), size=k, replace=False)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        for flat in picks:
            i = int(np.searchsorted(offsets, flat, side="right") - 1)
            yield names[i], int(flat - offsets[i])

    # head outputs of invisible corners carry gradients ~1e-8 times the rest,
    # below what a float64 central difference on the full loss can resolve
    resolvable = {n: np.ones(t.data.size, bool) for n, t in taps.items()}
    resolvable["head.out"] = np.repeat(np.asarray(mask, bool).reshape(-1), 2)

    def tap_coords(names, k):
        for _ in range(k):
            name = names[int(rng.integers(len(names)))]
            yield name, int(rng.choice(np.flatnonzero(resolvable[name])))

    conv_names = [n for n in params if n.startswith("conv")]
    dense_names = [n for n in params if n.startswith("head")]
    tanh_taps = [n for n in taps if n.endswith(".out")]

    errors = {}
    for kind, coords, is_param in (
        ("conv", param_coords(conv_names, per_layer), True),
        ("dense", param_coords(dense_names, per_layer), True),
        ("tanh", tap_coords(tanh_taps, per_layer), False),
        ("pool", tap_coords(["pool.in"], per_layer), False),
    ):
        errs = []
        for name, flat in coords:
            if is_param:
                analytic = pt[name].grad.ravel()[flat]
                shifted = []
                for sign in (1, -1):
                    p = dict(params)
                    p[name] = params[name].copy()
                    p[name].ravel()[flat] += sign * step
                    shifted.append(loss(p))
            else:
                analytic = taps[name].grad.ravel()[flat]
                shifted = []
                for sign in (1, -1):
                    delta = np.zeros_like(taps[name].data)
                    delta.ravel()[flat] = sign * step
                    shifted.append(loss(params, {name: delta}))
            numeric = (shifted[0] - shifted[1]) / (2 * step)
            errs.append(relative_error(analytic, numeric))
        errors[kind] = np.array(errs)
    return errors
