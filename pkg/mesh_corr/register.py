'''
Guided parametric ICP: fit body parameters so the skinned template
matches a scan. Matching blends real-space distance with distance in
the correspondence embedding; the error itself is measured in metres.

Also the transfer of correspondence between registered scans and its
evaluation.
'''
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np
import yaml
from scipy import optimize, sparse
from scipy.spatial import cKDTree

from mesh_corr.body_model import (
    BodyParams,
    beta_slice,
    prior_losses,
    skin,
    skin_jacobian,
    skin_vertices,
    theta_slice,
)
from mesh_corr.constants import (
    BETA_MAX,
    BETA_MIN,
    CONVERGENCE_TOLERANCE,
    COREGISTER_ROUNDS,
    CURVE_MAX_CM,
    CURVE_STEP_CM,
    DATA_SCALE,
    DIVERGENCE_COUNT,
    GRADIENT_TOLERANCE,
    INNER_ITERATIONS,
    LAMBDA_BETA,
    LAMBDA_OMEGA,
    LAMBDA_OMEGA_DECAY,
    LAMBDA_THETA,
    NONRIGID_MU,
    NONRIGID_STEPS,
    OUTER_ITERATIONS,
    POLISH_ROUNDS,
    ZERO_LAMBDA_ITERATIONS,
)
from mesh_corr.embedding import CorrespondenceField, nearest_index
from mesh_corr.mesh_io import read_mesh, write_mesh
from mesh_corr.utils import MeshCorrError, format_float, read_csv, write_csv


logger = logging.getLogger(__name__)

# keeps scale factors strictly inside the open interval
BETA_MARGIN = 1e-6

CONVERGENCE_FIELDS = [
    'iteration',
    'lambda_omega',
    'loss_xi',
    'loss_beta',
    'loss_theta',
    'loss_icp',
    'inner_iterations',
]
MATCH_FIELDS = [
    'scan_vertex',
    'model_vertex',
    'face',
    'b0', 'b1', 'b2',
    'tx', 'ty', 'tz',
    'distance_m',
]



class OptimizerError(MeshCorrError):
    pass


class MatchError(MeshCorrError):
    pass



@dataclass(frozen=True)
class MatchWeights:
    '''
    lambda_omega
        initial weight of squared embedding distance against squared
        metres when matching. Its useful magnitude depends on the scale
        of the embedding.
    '''
    lambda_omega: float = LAMBDA_OMEGA
    decay: float = LAMBDA_OMEGA_DECAY
    lambda_beta: float = LAMBDA_BETA
    lambda_theta: float = LAMBDA_THETA
    outer_iterations: int = OUTER_ITERATIONS
    inner_iterations: int = INNER_ITERATIONS
    zero_iterations: int = ZERO_LAMBDA_ITERATIONS

    @classmethod
    def from_config(cls, config):
        return cls(
            lambda_omega=config.lambda_omega,
            decay=config.lambda_omega_decay,
            lambda_beta=config.lambda_beta,
            lambda_theta=config.lambda_theta,
            outer_iterations=config.outer_iterations,
            inner_iterations=config.inner_iterations,
        )

    def schedule(self):
        '''
        lambda_omega per outer iteration. Nonincreasing, the last
        iterations at zero.
        '''
        n = self.outer_iterations
        zero = min(self.zero_iterations, n)
        return [
            0.0 if k >= n - zero else self.lambda_omega * self.decay ** k
            for k in range(n)
        ]


@dataclass(frozen=True)
class Registration:
    '''
    scan
        the registered Mesh
    fitted
        skinned template at params
    matches
        (V_scan,) model vertex matched to each scan vertex
    match_face, match_bary
        closest point of the fitted surface near that vertex, as a face
        and barycentric coordinates
    rest_points
        (V_scan,3) the same points on the rest template
    loss_xi
        area-weighted mean squared match distance, m^2
    loss_icp
        the minimised objective, data term in mm^2 plus weighted priors
    scan_to_model, model_to_scan
        mean nearest-vertex distances, m
    convergence
        list of dict, one per outer iteration or coregistration round
    '''
    scan: object
    params: BodyParams
    fitted: object
    matches: np.ndarray
    match_face: np.ndarray
    match_bary: np.ndarray
    rest_points: np.ndarray
    loss_xi: float
    loss_icp: float
    scan_to_model: float = 0.0
    model_to_scan: float = 0.0
    convergence: list = field(default_factory=list)
    nonrigid: bool = False

    def summary(self):
        return {
            'vertices': int(self.scan.n_vertices),
            'loss_xi': float(self.loss_xi),
            'loss_icp': float(self.loss_icp),
            'scan_to_model': float(self.scan_to_model),
            'model_to_scan': float(self.model_to_scan),
            'iterations': len(self.convergence),
            'nonrigid': self.nonrigid,
        }


@dataclass(frozen=True)
class Transfer:
    '''
    indices
        scan B vertex per scan A vertex
    points
        positions of those vertices
    valid
        False where no counterpart exists
    '''
    indices: np.ndarray
    points: np.ndarray
    valid: np.ndarray



## Matching
def match(points, omega, model_points, model_omega, lambda_omega, workers=1):
    '''
    Model vertex minimising |x - m|^2 + lambda_omega |omega_x - omega_m|^2
    for every scan point, lowest index on ties.
    '''
    if (len(model_points) == 0):
        raise MatchError("Model has no vertices.")
    if (len(omega) != len(points)):
        raise MatchError("Scan labels do not match the scan. labels:{} points:{}".format(len(omega), len(points)))
    if (np.shape(omega)[1] != np.shape(model_omega)[1]):
        raise MatchError("Field and embedding dimensions differ. field:{} embedding:{}".format(
            np.shape(omega)[1],
            np.shape(model_omega)[1]
        ))
    s = np.sqrt(max(float(lambda_omega), 0.0))
    model = np.concatenate((model_points, s * model_omega), axis=1)
    query = np.concatenate((points, s * omega), axis=1)
    return nearest_index(cKDTree(model), model, query, workers)

def area_weights(scan):
    '''
    Vertex areas over total area. Sum to one.
    '''
    a = scan.area
    if (a <= 0):
        raise MatchError("Scan has no area.")
    return scan.vertex_areas / a

def _data_loss(points, weights, matches, model_vertices):
    diff = model_vertices[matches] - points
    loss = float(weights @ (diff * diff).sum(axis=1))
    grad = np.zeros_like(model_vertices)
    np.add.at(grad, matches, 2.0 * weights[:, None] * diff)
    return loss, grad

def data_loss(scan, matches, model_vertices):
    '''
    Area-weighted mean squared distance from scan vertices to their
    matched model vertices.
    return
        (loss m^2, gradient w.r.t. model vertex positions (V_model,3))
    '''
    return _data_loss(scan.vertices, area_weights(scan), matches, model_vertices)



## Objective
class IcpObjective:
    '''
    Data loss plus shape and pose priors with matches held fixed, as a
    function of the parameter vector. The data term enters in squared
    millimetres (DATA_SCALE).
    '''
    def __init__(self, body, scan, matches, priors):
        self.body = body
        self.points = scan.vertices
        self.weights = area_weights(scan)
        self.matches = matches
        self.used = np.unique(matches)
        self.priors = priors
        self.n_joints = body.tree.n_joints

    def parts(self, x):
        '''
        return
            (loss_xi, loss_beta, loss_theta, data gradient (P,),
            d loss_beta / d beta, d loss_theta / d theta)
        '''
        tree = self.body.tree
        params = BodyParams.from_vector(x, self.n_joints)
        model = skin_vertices(tree, self.body.template.vertices, params)
        loss, grad_v = _data_loss(self.points, self.weights, self.matches, model)
        jac = skin_jacobian(tree, self.body.template, params, self.used)
        g = np.einsum('uap,ua->p', jac, grad_v[self.used])
        lb, lt, gb, gt = prior_losses(params, self.priors)
        return loss, lb, lt, g, gb, gt

    def __call__(self, x):
        loss, lb, lt, g, gb, gt = self.parts(x)
        n = self.n_joints
        f = DATA_SCALE * loss + self.priors.lambda_beta * lb + self.priors.lambda_theta * lt
        g = DATA_SCALE * g
        g[theta_slice(n)] += self.priors.lambda_theta * gt.reshape(-1)
        g[beta_slice(n)] += self.priors.lambda_beta * gb.reshape(-1)
        if (not(np.isfinite(f) and np.all(np.isfinite(g)))):
            raise OptimizerError("Non-finite loss or gradient.")
        return f, g


def parameter_bounds(tree, frozen=None):
    '''
    Joint angles within their ranges, scales inside (BETA_MIN, BETA_MAX),
    translation free.

    frozen
        optional (mask (P,), values (P,)); masked entries are pinned
    '''
    n = tree.n_joints
    lo = np.full(6 * n + 3, -np.inf)
    hi = np.full(6 * n + 3, np.inf)
    lo[theta_slice(n)] = tree.theta_min.reshape(-1)
    hi[theta_slice(n)] = tree.theta_max.reshape(-1)
    lo[beta_slice(n)] = BETA_MIN + BETA_MARGIN
    hi[beta_slice(n)] = BETA_MAX - BETA_MARGIN
    if (frozen is not None):
        mask, values = frozen
        lo[mask] = values[mask]
        hi[mask] = values[mask]
    return lo, hi

def _minimize(fun, x0, bounds, maxiter):
    '''
    One bounded quasi-Newton solve. Raises if the loss went up.
    return
        (x, loss, iterations, converged)
    '''
    lo, hi = bounds
    x0 = np.clip(x0, lo, hi)
    f0, _ = fun(x0)
    result = optimize.minimize(
        fun,
        x0,
        jac=True,
        method='L-BFGS-B',
        bounds=optimize.Bounds(lo, hi),
        options={'maxiter': maxiter, 'gtol': GRADIENT_TOLERANCE, 'ftol': 1e-15},
    )
    if (result.fun > f0 + 1e-12 * max(1.0, abs(f0))):
        raise OptimizerError("Inner minimisation increased the loss. before:{:.9g} after:{:.9g}".format(f0, result.fun))
    converged = bool(result.success) and int(result.nit) < maxiter
    return result.x, float(result.fun), int(result.nit), converged



## Fitting
def scan_labels(scan, predicted):
    '''
    Predicted field as per-vertex values on the scan.
    '''
    if (not isinstance(predicted, CorrespondenceField)):
        predicted = CorrespondenceField(np.asarray(predicted, dtype=np.float64), 'vertices')
    values = predicted.to_vertices(scan).values
    if (len(values) != scan.n_vertices):
        raise MatchError("Field rows do not match the scan. rows:{} vertices:{}".format(len(values), scan.n_vertices))
    return values

def initial_params(body, scan, priors):
    '''
    Prior pose and shape, translated so centroids agree.
    '''
    p = priors.params()
    model = skin_vertices(body.tree, body.template.vertices, p)
    return p.replace(translation=scan.vertices.mean(axis=0) - model.mean(axis=0))

def _closest_barycentric(p, a, b, c):
    '''
    Barycentric coordinates of the closest triangle point, row-wise.
    '''
    ab = b - a
    ac = c - a
    ap = p - a
    bp = p - b
    cp = p - c
    dot = lambda u, v: (u * v).sum(axis=-1)
    d1, d2 = dot(ab, ap), dot(ac, ap)
    d3, d4 = dot(ab, bp), dot(ac, bp)
    d5, d6 = dot(ab, cp), dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    safe = lambda x: np.where(np.abs(x) < 1e-300, 1.0, x)

    denom = safe(va + vb + vc)
    v = vb / denom
    w = vc / denom
    r = np.stack((1.0 - v - w, v, w), axis=-1)
    # edge and vertex regions, later entries taking precedence
    regions = (
        ((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), 'bc', (d4 - d3) / safe((d4 - d3) + (d5 - d6))),
        ((vb <= 0) & (d2 >= 0) & (d6 <= 0), 'ac', d2 / safe(d2 - d6)),
        ((d6 >= 0) & (d5 <= d6), 'c', None),
        ((vc <= 0) & (d1 >= 0) & (d3 <= 0), 'ab', d1 / safe(d1 - d3)),
        ((d3 >= 0) & (d4 <= d3), 'b', None),
        ((d1 <= 0) & (d2 <= 0), 'a', None),
    )
    for mask, kind, t in regions:
        if (not np.any(mask)):
            continue
        if (kind == 'bc'):
            val = np.stack((np.zeros_like(t), 1.0 - t, t), axis=-1)
        elif (kind == 'ac'):
            val = np.stack((1.0 - t, np.zeros_like(t), t), axis=-1)
        elif (kind == 'ab'):
            val = np.stack((1.0 - t, t, np.zeros_like(t)), axis=-1)
        else:
            val = np.zeros(r.shape)
            val[..., 'abc'.index(kind)] = 1.0
        r = np.where(mask[..., None], val, r)
    return np.clip(r, 0.0, 1.0)

def project_matches(points, model, matches):
    '''
    Refine vertex matches to the closest point on the faces around
    the matched vertex.
    return
        (face (n,), barycentric (n,3))
    '''
    n = model.n_vertices
    f = model.n_faces
    rows = model.faces.reshape(-1)
    cols = np.repeat(np.arange(f), 3)
    incidence = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, f))
    counts = np.diff(incidence.indptr)
    width = max(int(counts.max()), 1)
    table = np.full((n, width), -1, dtype=np.int64)
    for k in range(width):
        has = counts > k
        table[has, k] = incidence.indices[incidence.indptr[:-1][has] + k]
    cand = table[matches]
    safe = np.where(cand >= 0, cand, 0)
    tri = model.vertices[model.faces[safe]]
    p = np.repeat(points[:, None, :], width, axis=1)
    bary = _closest_barycentric(p, tri[..., 0, :], tri[..., 1, :], tri[..., 2, :])
    closest = np.einsum('nkc,nkcd->nkd', bary, tri)
    d2 = ((closest - p) ** 2).sum(axis=2)
    d2[cand < 0] = np.inf
    best = np.argmin(d2, axis=1)
    rows = np.arange(len(points))
    return safe[rows, best], bary[rows, best]

def bidirectional_distances(scan, model):
    '''
    return
        (mean scan-to-model, mean model-to-scan) nearest-vertex distance
    '''
    s2m, _ = cKDTree(model.vertices).query(scan.vertices)
    m2s, _ = cKDTree(scan.vertices).query(model.vertices)
    return float(s2m.mean()), float(m2s.mean())

def _finish(body, scan, params, omega, emb, priors, log, workers=1, nonrigid=False, fitted=None):
    params = params.wrapped()
    fitted = skin(body.tree, body.template, params) if fitted is None else fitted
    matches = match(scan.vertices, omega, fitted.vertices, emb.omega, 0.0, workers)
    loss, _ = data_loss(scan, matches, fitted.vertices)
    lb, lt, _, _ = prior_losses(params, priors)
    face, bary = project_matches(scan.vertices, fitted, matches)
    rest = np.einsum('nk,nkd->nd', bary, body.template.vertices[body.template.faces[face]])
    s2m, m2s = bidirectional_distances(scan, fitted)
    return Registration(
        scan=scan,
        params=params,
        fitted=fitted,
        matches=matches,
        match_face=face,
        match_bary=bary,
        rest_points=rest,
        loss_xi=loss,
        loss_icp=DATA_SCALE * loss + priors.lambda_beta * lb + priors.lambda_theta * lt,
        scan_to_model=s2m,
        model_to_scan=m2s,
        convergence=log,
        nonrigid=nonrigid,
    )

def _icp_step(body, scan, omega, emb, priors, bounds, params, lam, maxiter, workers):
    '''
    Rematch at one embedding weight, then minimise with matches fixed.
    return
        (params, objective value, log row fields, converged)
    '''
    model = skin_vertices(body.tree, body.template.vertices, params)
    matches = match(scan.vertices, omega, model, emb.omega, lam, workers)
    objective = IcpObjective(body, scan, matches, priors)
    x, loss, nit, converged = _minimize(objective, params.vector(), bounds, maxiter)
    loss_xi, lb, lt, _, _, _ = objective.parts(x)
    row = {
        'lambda_omega': lam,
        'loss_xi': loss_xi,
        'loss_beta': lb,
        'loss_theta': lt,
        'loss_icp': loss,
        'inner_iterations': nit,
    }
    return BodyParams.from_vector(x, body.tree.n_joints), loss, row, converged

def guided_icp(scan, predicted, body, emb, weights=None, init=None, workers=1):
    '''
    Fit body parameters to a scan.

    The embedding weight follows the schedule. Once it reaches zero the
    fit stops when a round lowers the loss by less than
    CONVERGENCE_TOLERANCE and the inner solve converged. Up to
    POLISH_ROUNDS zero-weight rounds follow the schedule if it runs out
    first.

    predicted
        CorrespondenceField on the scan's edges or vertices
    init
        starting BodyParams, default the priors moved onto the scan
    return
        Registration
    '''
    weights = weights or MatchWeights()
    omega = scan_labels(scan, predicted)
    priors = body.priors(weights.lambda_beta, weights.lambda_theta)
    params = init or initial_params(body, scan, priors)
    bounds = parameter_bounds(body.tree)
    schedule = weights.schedule()
    log = []
    previous = None
    rising = 0
    for k in range(len(schedule) + POLISH_ROUNDS):
        lam = schedule[k] if k < len(schedule) else 0.0
        params, loss, row, converged = _icp_step(
            body, scan, omega, emb, priors, bounds, params, lam, weights.inner_iterations, workers
        )
        log.append(dict(iteration=k, **row))
        logger.info("ICP iteration:%s lambda_omega:%.6g loss:%.9g", k, lam, loss)
        settled = False
        if (previous is not None):
            if (loss > previous):
                rising += 1
                if (rising >= DIVERGENCE_COUNT):
                    logger.error("ICP diverging, loss rose %s times. loss:%.9g", rising, loss)
                    raise OptimizerError("Loss increased over {} consecutive iterations. iteration:{}".format(rising, k))
            else:
                rising = 0
            settled = (lam == 0 and previous - loss < CONVERGENCE_TOLERANCE)
        previous = loss
        if (settled and converged):
            break
    else:
        logger.warning("ICP stopped without converging. rounds:%s loss:%.9g", len(log), previous)
    return _finish(body, scan, params, omega, emb, priors, log, workers)

def nonrigid_refine(reg, mu=NONRIGID_MU, steps=NONRIGID_STEPS):
    '''
    Free per-vertex offsets on the fitted model, pulled toward the
    matched scan points and held back by an area-weighted graph
    Laplacian penalty mu |L u|^2. Matches stay fixed.
    return
        Registration with the refined fitted mesh
    '''
    scan = reg.scan
    model = reg.fitted
    w_scan = area_weights(scan)
    w_model = model.vertex_areas / model.area
    adj = model.adjacency
    deg = np.asarray(adj.sum(axis=1)).reshape(-1)
    deg[deg == 0] = 1.0
    lap = (sparse.identity(model.n_vertices) - sparse.diags(1.0 / deg) @ adj).tocsr()
    reg_op = (lap.T @ sparse.diags(w_model) @ lap).tocsr()
    acc = np.bincount(reg.matches, w_scan, minlength=model.n_vertices)
    norm1 = abs(lap).sum(axis=0).max()
    norminf = abs(lap).sum(axis=1).max()
    lipschitz = 2.0 * acc.max() + 2.0 * mu * w_model.max() * norm1 * norminf
    step = 1.0 / lipschitz
    u = np.zeros_like(model.vertices)
    for _ in range(steps):
        _, g = _data_loss(scan.vertices, w_scan, reg.matches, model.vertices + u)
        g += 2.0 * mu * (reg_op @ u)
        u -= step * g
    fitted = model.with_vertices(model.vertices + u)
    loss, _ = _data_loss(scan.vertices, w_scan, reg.matches, fitted.vertices)
    face, bary = project_matches(scan.vertices, fitted, reg.matches)
    s2m, m2s = bidirectional_distances(scan, fitted)
    logger.info("Nonrigid refinement loss before:%.9g after:%.9g", reg.loss_xi, loss)
    return replace(
        reg,
        fitted=fitted,
        match_face=face,
        match_bary=bary,
        loss_xi=loss,
        loss_icp=reg.loss_icp + DATA_SCALE * (loss - reg.loss_xi),
        scan_to_model=s2m,
        model_to_scan=m2s,
        nonrigid=True,
    )



## Coregistration
def _map(fn, items, workers):
    if (workers > 1 and len(items) > 1):
        with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]

def _fit_one(body, emb, weights, item):
    scan, predicted = item
    return guided_icp(scan, predicted, body, emb, weights)

def _pose_step(body, emb, priors, maxiter, item):
    '''
    Pose and translation update with shape frozen.
    '''
    scan, omega, params = item
    model = skin_vertices(body.tree, body.template.vertices, params)
    matches = match(scan.vertices, omega, model, emb.omega, 0.0)
    objective = IcpObjective(body, scan, matches, priors)
    n = body.tree.n_joints
    mask = np.zeros(6 * n + 3, dtype=bool)
    mask[beta_slice(n)] = True
    x0 = params.vector()
    x, _, _, converged = _minimize(objective, x0, parameter_bounds(body.tree, (mask, x0)), maxiter)
    return BodyParams.from_vector(x, n), objective, converged

def coregister(scans, predicted, body, emb, weights=None, shared_shape=True, rounds=COREGISTER_ROUNDS, workers=1):
    '''
    Register several scans of one subject.

    With shared_shape, independent fits are followed by rounds of
    per-scan pose updates and one joint shape update minimising the
    summed loss, until a round gains less than CONVERGENCE_TOLERANCE.
    return
        list of Registration, in scan order
    '''
    weights = weights or MatchWeights()
    regs = _map(partial(_fit_one, body, emb, weights), list(zip(scans, predicted)), workers)
    if (not shared_shape or len(scans) < 2):
        return regs
    n = body.tree.n_joints
    priors = body.priors(weights.lambda_beta, weights.lambda_theta)
    omegas = [scan_labels(s, p) for s, p in zip(scans, predicted)]
    beta = np.mean([r.params.beta for r in regs], axis=0)
    params = [r.params.replace(beta=beta) for r in regs]
    lo, hi = parameter_bounds(body.tree)
    bs = beta_slice(n)
    log = []
    previous = None
    for k in range(rounds):
        steps = _map(
            partial(_pose_step, body, emb, priors, weights.inner_iterations),
            list(zip(scans, omegas, params)),
            workers,
        )
        params = [p for p, _, _ in steps]
        objectives = [o for _, o, _ in steps]

        def joint(b, params=params, objectives=objectives):
            total = 0.0
            g = np.zeros(len(b))
            bb = b.reshape(n, 3)
            for p, o in zip(params, objectives):
                loss, _, lt, gx, _, _ = o.parts(p.replace(beta=bb).vector())
                total += DATA_SCALE * loss + priors.lambda_theta * lt
                g += DATA_SCALE * gx[bs]
            lb, _, gb, _ = prior_losses(params[0].replace(beta=bb), priors)
            total += priors.lambda_beta * lb
            g += priors.lambda_beta * gb.reshape(-1)
            if (not(np.isfinite(total) and np.all(np.isfinite(g)))):
                raise OptimizerError("Non-finite loss or gradient in shape update.")
            return total, g

        x, loss, nit, converged = _minimize(joint, params[0].beta.reshape(-1), (lo[bs], hi[bs]), weights.inner_iterations)
        beta = x.reshape(n, 3)
        params = [p.replace(beta=beta) for p in params]
        log.append({
            'iteration': k,
            'lambda_omega': 0.0,
            'loss_xi': '',
            'loss_beta': '',
            'loss_theta': '',
            'loss_icp': loss,
            'inner_iterations': nit,
        })
        logger.info("Coregistration round:%s summed loss:%.9g", k, loss)
        if (previous is not None and previous - loss < CONVERGENCE_TOLERANCE
                and converged and all(c for _, _, c in steps)):
            break
        previous = loss
    return [
        _finish(body, s, p, o, emb, priors, r.convergence + log)
        for s, p, o, r in zip(scans, params, omegas, regs)
    ]



## Transfer and evaluation
def _nearest_transfer(source, target, scan_b):
    idx = nearest_index(cKDTree(target), target, source)
    return Transfer(idx, scan_b.vertices[idx], np.ones(len(idx), dtype=bool))

def transfer_correspondence(reg_a, reg_b):
    '''
    Map scan A to scan B through the template: each point of A goes to
    the point of B whose template match lies closest to its own.
    '''
    return _nearest_transfer(reg_a.rest_points, reg_b.rest_points, reg_b.scan)

def raw_transfer(scan_a, predicted_a, scan_b, predicted_b):
    '''
    Map scan A to scan B by nearest predicted embedding value, with no
    model fitting.
    '''
    return _nearest_transfer(scan_labels(scan_a, predicted_a), scan_labels(scan_b, predicted_b), scan_b)

def random_transfer(scan_a, scan_b, rng):
    '''
    Map each point of scan A to a uniformly drawn point of scan B. The
    chance baseline for the other transfers.
    '''
    idx = rng.integers(0, scan_b.n_vertices, scan_a.n_vertices)
    return Transfer(idx, scan_b.vertices[idx], np.ones(len(idx), dtype=bool))

def ground_truth_transfer(rest_a, rest_b, scan_b, tolerance=1e-6):
    '''
    True map between two scans of the same template, from each scan
    vertex's rest-template position. Points of A with no counterpart in
    B are invalid.
    '''
    rest_b = np.asarray(rest_b, dtype=np.float64)
    tree = cKDTree(rest_b)
    dist, _ = tree.query(rest_a)
    idx = nearest_index(tree, rest_b, np.asarray(rest_a, dtype=np.float64))
    return Transfer(idx, scan_b.vertices[idx], dist <= tolerance)

def transfer_error(transfer, truth):
    '''
    return
        per-point error in cm over points valid in both maps
    '''
    if (len(transfer.points) != len(truth.points)):
        raise MatchError("Transfers differ in length. transfer:{} truth:{}".format(len(transfer.points), len(truth.points)))
    ok = transfer.valid & truth.valid
    return 100.0 * np.linalg.norm(transfer.points[ok] - truth.points[ok], axis=1)

def mean_error(errors):
    return float(np.mean(errors)) if len(errors) else 0.0

def cumulative_curve(errors, max_cm=CURVE_MAX_CM, step_cm=CURVE_STEP_CM):
    '''
    Fraction of points with error at or under each threshold.
    return
        list of (threshold cm, fraction)
    '''
    errors = np.sort(np.asarray(errors, dtype=np.float64))
    thresholds = np.arange(0.0, max_cm + 0.5 * step_cm, step_cm)
    if (len(errors) == 0):
        return [(float(t), 0.0) for t in thresholds]
    counts = np.searchsorted(errors, thresholds, side='right')
    return [(float(t), float(c) / len(errors)) for t, c in zip(thresholds, counts)]



## Files
def save_registration(reg, directory):
    '''
    Write fitted.ply, scan.ply, params.yaml, matches.csv and
    convergence.csv into a directory.
    '''
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_mesh(reg.fitted, d / 'fitted.ply')
    write_mesh(reg.scan, d / 'scan.ply')
    data = reg.params.as_dict()
    data.update(reg.summary())
    with open(d / 'params.yaml', 'w', encoding='utf-8') as f:
        yaml.safe_dump(data, f, sort_keys=True)
    dist = np.linalg.norm(reg.fitted.vertices[reg.matches] - reg.scan.vertices, axis=1)
    rows = (
        {
            'scan_vertex': i,
            'model_vertex': int(reg.matches[i]),
            'face': int(reg.match_face[i]),
            'b0': format_float(reg.match_bary[i, 0]),
            'b1': format_float(reg.match_bary[i, 1]),
            'b2': format_float(reg.match_bary[i, 2]),
            'tx': format_float(reg.rest_points[i, 0]),
            'ty': format_float(reg.rest_points[i, 1]),
            'tz': format_float(reg.rest_points[i, 2]),
            'distance_m': format_float(dist[i]),
        }
        for i in range(reg.scan.n_vertices)
    )
    write_csv(d / 'matches.csv', MATCH_FIELDS, rows)
    write_csv(
        d / 'convergence.csv',
        CONVERGENCE_FIELDS,
        ({k: (format_float(v) if isinstance(v, float) else v) for k, v in row.items()} for row in reg.convergence),
    )

def load_registration(directory):
    d = Path(directory)
    try:
        with open(d / 'params.yaml', encoding='utf-8') as f:
            data = yaml.safe_load(f)
        params = BodyParams.from_dict(data)
        rows = read_csv(d / 'matches.csv')
        convergence = read_csv(d / 'convergence.csv')
    except (OSError, KeyError, yaml.YAMLError) as e:
        raise MatchError("Registration can not be read. path:{} detail:{}".format(d, e))
    col = lambda k, t=float: np.array([t(r[k]) for r in rows])
    return Registration(
        scan=read_mesh(d / 'scan.ply'),
        params=params,
        fitted=read_mesh(d / 'fitted.ply'),
        matches=col('model_vertex', int),
        match_face=col('face', int),
        match_bary=np.stack((col('b0'), col('b1'), col('b2')), axis=1),
        rest_points=np.stack((col('tx'), col('ty'), col('tz')), axis=1),
        loss_xi=float(data['loss_xi']),
        loss_icp=float(data['loss_icp']),
        scan_to_model=float(data['scan_to_model']),
        model_to_scan=float(data['model_to_scan']),
        convergence=convergence,
        nonrigid=bool(data['nonrigid']),
    )
