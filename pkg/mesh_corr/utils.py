import csv
import os
import struct
from pathlib import Path

import numpy as np


class MeshCorrError(Exception):
    '''
    Base for runtime failures raised by the pipeline modules.
    Management commands catch this and report a one-line error.
    '''
    pass



def app_name(klass):
    '''
    Get an app name from a klass
        return the appname. If the name is empty, raises.
    '''
    r = klass.__module__.split('.', 1)[0]
    if (r == ""):
        raise Exception(f"App name requested but not found. klass:{klass}")
    return r

def module_label(klass_or_instance):
    '''
    Short module name of a class or instance, 'decimate' for
    'mesh_corr.decimate'.
    '''
    klass = klass_or_instance if isinstance(klass_or_instance, type) else type(klass_or_instance)
    return klass.__module__.rsplit('.', 1)[-1]

def worker_count(workers):
    '''
    Resolve a worker count option.
    workers
        0 or None means all available cores
    '''
    if (not workers):
        return os.cpu_count() or 1
    return int(workers)

def derive_seeds(seed, count):
    '''
    Independent integer seeds for count jobs, stable for a given seed.
    '''
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]



## Binary row tables
# Header (count:u32, width:u32, value:f64), then row-major f32.
# Shared by embedding, label and field files.
HEADER = struct.Struct('<IId')

def write_table(path, rows, value=0.0):
    rows = np.asarray(rows, dtype=np.float64)
    if (rows.ndim == 1):
        rows = rows[:, None]
    data = HEADER.pack(rows.shape[0], rows.shape[1], float(value))
    data += rows.astype('<f4').tobytes()
    Path(path).write_bytes(data)

def read_table(path):
    '''
    Read a binary row table.
    return
        (rows as float64 (count, width), header value)
    '''
    data = Path(path).read_bytes()
    if (len(data) < HEADER.size):
        raise MeshCorrError(f"Table file too short. path:{path}")
    count, width, value = HEADER.unpack_from(data)
    expected = HEADER.size + 4 * count * width
    if (len(data) != expected):
        raise MeshCorrError("Table file size does not match header. path:{} size:{} expected:{}".format(
            path,
            len(data),
            expected
        ))
    rows = np.frombuffer(data, dtype='<f4', offset=HEADER.size).reshape(count, width)
    return rows.astype(np.float64), value



## CSV
def write_csv(path, fieldnames, rows):
    with open(path, 'w', newline='', encoding='utf-8') as f:
        w = csv.DictWriter(f, fieldnames=fieldnames, extrasaction='ignore', lineterminator='\n')
        w.writeheader()
        for row in rows:
            w.writerow(row)

def read_csv(path):
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))

def format_float(v):
    return '{:.9g}'.format(float(v))
