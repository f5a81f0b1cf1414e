"""Deterministic, runtime-free docker-save archives for tests and demos.

Each canned image mimics the layer structure and runtime settings of a
well-known base image. Contents are short ASCII stand-ins, not binaries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .archive import (
    ImageArchive,
    ImageConfig,
    Manifest,
    compute_image_id,
    parse_timestamp,
    save_archive,
)
from .digest import Digest
from .errors import ArchiveError, SpecInvalid
from .layerfs import LayerBlob, canonical_bytes, layer_digest
from .tarcodec import EntryKind, TarEntry

FIXTURE_CREATED = "2024-08-14T00:00:00Z"
FIXTURE_EPOCH = parse_timestamp(FIXTURE_CREATED)


@dataclass(frozen=True)
class FileSpec:
    path: str
    kind: EntryKind = EntryKind.REGULAR
    data: str = ""  # content for regular files, target for links
    mode: int | None = None
    mtime: int = FIXTURE_EPOCH


@dataclass(frozen=True)
class FixtureSpec:
    name: str
    name_tag: str
    layers: tuple[tuple[FileSpec, ...], ...]
    history: tuple[tuple[str, bool], ...]
    entrypoint: tuple[str, ...] = ()
    command: tuple[str, ...] = ()
    env: tuple[str, ...] = ("PATH=/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin",)
    working_dir: str = ""
    created: str = FIXTURE_CREATED
    target_prefix: str = "usr/local/bin"  # where the automated attack aims by default


def d(path: str, mode: int = 0o755) -> FileSpec:
    return FileSpec(path, EntryKind.DIRECTORY, mode=mode)


def f(path: str, data: str, mode: int = 0o644) -> FileSpec:
    return FileSpec(path, EntryKind.REGULAR, data, mode)


def x(path: str, data: str) -> FileSpec:
    return FileSpec(path, EntryKind.REGULAR, data, 0o755)


def ln(path: str, target: str) -> FileSpec:
    return FileSpec(path, EntryKind.SYMLINK, target, 0o777)


def hl(path: str, target: str) -> FileSpec:
    return FileSpec(path, EntryKind.HARDLINK, target, 0o755)


def _entry(spec: FileSpec) -> TarEntry:
    mode = spec.mode
    if mode is None:
        mode = {EntryKind.DIRECTORY: 0o755, EntryKind.SYMLINK: 0o777}.get(spec.kind, 0o644)
    if spec.kind is EntryKind.REGULAR:
        return TarEntry(spec.path, spec.kind, mode=mode, mtime=spec.mtime,
                        content=spec.data.encode("utf-8"))
    if spec.kind in (EntryKind.SYMLINK, EntryKind.HARDLINK):
        return TarEntry(spec.path, spec.kind, mode=mode, mtime=spec.mtime, link_target=spec.data)
    return TarEntry(spec.path, spec.kind, mode=mode, mtime=spec.mtime)


def _compact(doc) -> bytes:
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def build_fixture(spec: FixtureSpec) -> ImageArchive:
    non_empty = sum(1 for _, empty in spec.history if not empty)
    if non_empty != len(spec.layers):
        raise SpecInvalid(f"{spec.name}: {non_empty} layer-producing history entries "
                          f"for {len(spec.layers)} layers")
    if not spec.layers:
        raise SpecInvalid(f"{spec.name}: an image needs at least one layer")
    try:
        parse_timestamp(spec.created)
    except ValueError as exc:
        raise SpecInvalid(str(exc)) from None
    try:
        layers = [LayerBlob(tuple(_entry(s) for s in layer)) for layer in spec.layers]
    except (ValueError, ArchiveError) as exc:
        raise SpecInvalid(f"{spec.name}: {exc}") from None
    # bind each layer to its canonical bytes, exactly as a load would
    layers = [LayerBlob(layer.entries, raw=canonical_bytes(layer)) for layer in layers]
    diff_ids = [layer_digest(layer) for layer in layers]
    if len(set(diff_ids)) != len(diff_ids):
        raise SpecInvalid(f"{spec.name}: two layers have identical content")

    config_doc = {
        "architecture": "amd64",
        "config": {
            "Env": list(spec.env),
            "Entrypoint": list(spec.entrypoint) or None,
            "Cmd": list(spec.command) or None,
            "WorkingDir": spec.working_dir,
        },
        "created": spec.created,
        "history": [
            {"created": spec.created, "created_by": created_by, **({"empty_layer": True} if empty else {})}
            for created_by, empty in spec.history
        ],
        "os": "linux",
        "rootfs": {"type": "layers", "diff_ids": [str(dg) for dg in diff_ids]},
    }
    config = ImageConfig.from_bytes(_compact(config_doc))
    image_id = compute_image_id(config)

    layer_paths = [f"{dg.hex}/layer.tar" for dg in diff_ids]
    extras: list[TarEntry] = []
    parent: Digest | None = None
    for dg in diff_ids:
        stub = {"id": dg.hex, **({"parent": parent.hex} if parent else {}), "created": spec.created}
        extras += [
            TarEntry(dg.hex, EntryKind.DIRECTORY, mode=0o755),
            TarEntry(f"{dg.hex}/VERSION", EntryKind.REGULAR, content=b"1.0"),
            TarEntry(f"{dg.hex}/json", EntryKind.REGULAR, content=_compact(stub)),
        ]
        parent = dg
    repo, _, tag = spec.name_tag.rpartition(":")
    extras.append(TarEntry("repositories", EntryKind.REGULAR,
                           content=_compact({repo: {tag: diff_ids[-1].hex}})))

    manifest = Manifest.from_bytes(_compact([{
        "Config": f"{image_id.hex}.json",
        "RepoTags": [spec.name_tag],
        "Layers": layer_paths,
    }]))
    return ImageArchive(manifest, config, tuple(layers), tuple(extras))


def fixture_bytes(spec: FixtureSpec) -> bytes:
    return save_archive(build_fixture(spec))


# --------------------------------------------------------------------------
# canned images

def _debian_base(codename: str = "bookworm", version: str = "12") -> tuple[FileSpec, ...]:
    return (
        d("bin"), x("bin/bash", "ELF bash 5.2"), x("bin/dash", "ELF dash 0.5"), ln("bin/sh", "dash"),
        x("bin/ls", "ELF coreutils ls"), x("bin/cat", "ELF coreutils cat"),
        d("etc"), f("etc/debian_version", f"{version}.6\n"),
        f("etc/os-release", f'PRETTY_NAME="Debian GNU/Linux {version} ({codename})"\nVERSION_ID="{version}"\n'),
        f("etc/passwd", "root:x:0:0:root:/root:/bin/bash\n"),
        d("usr"), d("usr/bin"), x("usr/bin/env", "ELF coreutils env"), x("usr/bin/apt-get", "ELF apt-get"),
        d("usr/lib"), d("usr/lib/x86_64-linux-gnu"), f("usr/lib/x86_64-linux-gnu/libc.so.6", "ELF glibc 2.36"),
        d("usr/local"), d("usr/local/bin"), d("usr/local/lib"),
        d("var"), d("var/lib"), d("var/lib/dpkg"), f("var/lib/dpkg/status", "Package: base-files\n"),
    )


_ADD_DEBIAN = "/bin/sh -c #(nop) ADD file:d13afefcc2b0b02b598a3ac2598fe2187db41de1e17820e5b600a955b1429d59 in / "
_DEBIAN_CMD = ('/bin/sh -c #(nop)  CMD ["bash"]', True)


def python_like() -> FixtureSpec:
    layers = (
        _debian_base(),
        (d("etc/ssl"), d("etc/ssl/certs"), f("etc/ssl/certs/ca-certificates.crt", "-----BEGIN CERTIFICATE-----\n"),
         d("usr/share/ca-certificates"), f("usr/share/ca-certificates/mozilla.crt", "cert\n")),
        (f("etc/protocols", "ip 0 IP\n"), f("etc/services", "http 80/tcp\n"),
         d("usr/share/zoneinfo"), f("usr/share/zoneinfo/UTC", "TZif2\n")),
        (d("usr/local/lib/python3.12"), f("usr/local/lib/python3.12/os.py", "import abc\n"),
         d("usr/local/lib/python3.12/test"), f("usr/local/lib/python3.12/test/test_os.py", "pass\n"),
         d("usr/local/include"), f("usr/local/include/python3.12/Python.h", "#define PY_VERSION \"3.12.5\"\n")),
        (d("usr/local/bin"), x("usr/local/bin/python3.12", "ELF CPython 3.12.5"),
         x("usr/local/bin/idle3.12", "#!/usr/local/bin/python3.12\n"),
         x("usr/local/bin/pydoc3.12", "#!/usr/local/bin/python3.12\n"),
         f("usr/local/lib/libpython3.12.so.1.0", "ELF libpython")),
        (d("usr/local/bin"), x("usr/local/bin/pip3.12", "#!/usr/local/bin/python3.12\nimport pip\n"),
         d("usr/local/lib/python3.12/site-packages"),
         f("usr/local/lib/python3.12/site-packages/pip/__init__.py", "__version__ = '24.2'\n")),
        (d("usr/local/lib/python3.12"), f("usr/local/lib/python3.12/.wh.test", ""),
         d("var/lib/apt"), d("var/lib/apt/lists"), f("var/lib/apt/lists/.wh..wh..opq", "")),
        (d("usr/local/bin"), ln("usr/local/bin/idle3", "idle3.12"), ln("usr/local/bin/pip3", "pip3.12"),
         ln("usr/local/bin/pydoc3", "pydoc3.12"), ln("usr/local/bin/python3", "python3.12"),
         ln("usr/local/bin/python3-config", "python3.12-config"),
         ln("usr/local/bin/idle", "idle3"), ln("usr/local/bin/pip", "pip3"),
         ln("usr/local/bin/pydoc", "pydoc3"), ln("usr/local/bin/python", "python3")),
    )
    history = (
        (_ADD_DEBIAN, False), _DEBIAN_CMD,
        ("ENV PATH=/usr/local/bin:/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin", True),
        ("ENV LANG=C.UTF-8", True),
        ("RUN /bin/sh -c set -eux; apt-get update; apt-get install -y --no-install-recommends ca-certificates; "
         "rm -rf /var/lib/apt/lists/* # buildkit", False),
        ("RUN /bin/sh -c set -eux; apt-get install -y netbase tzdata # buildkit", False),
        ("ENV GPG_KEY=7169605F62C751356D054A26A821E680E5FA6305", True),
        ("ENV PYTHON_VERSION=3.12.5", True),
        ("RUN /bin/sh -c set -eux; wget -O python.tar.xz ...; ./configure --enable-shared; make install "
         "# buildkit", False),
        ("RUN /bin/sh -c set -eux; ldconfig; python3.12 --version # buildkit", False),
        ("RUN /bin/sh -c set -eux; python3.12 -m ensurepip # buildkit", False),
        ("RUN /bin/sh -c set -eux; find /usr/local -depth -name test -exec rm -rf '{}' +; "
         "rm -rf /var/lib/apt/lists/* # buildkit", False),
        ("RUN /bin/sh -c set -eux; for src in idle3 pip3 pydoc3 python3 python3-config; do "
         "dst=\"$(echo \"$src\" | tr -d 3)\"; ln -svT \"$src\" \"/usr/local/bin/$dst\"; done # buildkit", False),
        ('CMD ["python3"]', True),
    )
    return FixtureSpec(
        "python-like", "python:3.12-slim", layers, history,
        command=("python3",),
        env=("PATH=/usr/local/bin:/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin",
             "LANG=C.UTF-8", "GPG_KEY=7169605F62C751356D054A26A821E680E5FA6305", "PYTHON_VERSION=3.12.5"),
        target_prefix="usr/local/bin",
    )


def alpine_like() -> FixtureSpec:
    layers = ((
        d("bin"), x("bin/busybox", "ELF BusyBox v1.36.1 (2024-06-10) multi-call binary"),
        ln("bin/sh", "/bin/busybox"), ln("bin/ls", "/bin/busybox"), ln("bin/cat", "/bin/busybox"),
        d("etc"), f("etc/alpine-release", "3.20.2\n"),
        f("etc/os-release", 'NAME="Alpine Linux"\nVERSION_ID=3.20.2\n'),
        d("lib"), d("lib/apk"), d("lib/apk/db"),
        f("lib/apk/db/installed", "P:busybox\nV:1.36.1-r29\n\nP:musl\nV:1.2.5-r0\n"),
        f("lib/ld-musl-x86_64.so.1", "ELF musl 1.2.5"),
        d("usr"), d("usr/bin"), ln("usr/bin/env", "/bin/busybox"), d("usr/local"), d("usr/local/bin"),
    ),)
    history = (
        ("/bin/sh -c #(nop) ADD file:99093095d62d0421541d882f9ceeddb2981fe701ec0aa9d2c08480712d5fed21 in / ", False),
        ('/bin/sh -c #(nop)  CMD ["/bin/sh"]', True),
    )
    return FixtureSpec("alpine-like", "alpine:3.20.2", layers, history, command=("/bin/sh",),
                       env=("PATH=/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin",),
                       target_prefix="bin")


def _ubuntu_base(version: str, codename: str) -> tuple[FileSpec, ...]:
    return (
        d("bin"), x("bin/bash", f"ELF bash ubuntu {version}"), ln("bin/sh", "dash"), x("bin/dash", "ELF dash"),
        d("etc"), f("etc/os-release", f'NAME="Ubuntu"\nVERSION_ID="{version}"\nVERSION_CODENAME={codename}\n'),
        f("etc/lsb-release", f"DISTRIB_RELEASE={version}\n"),
        d("usr"), d("usr/bin"), x("usr/bin/apt", "ELF apt"), x("usr/bin/env", "ELF coreutils env"),
        x("usr/bin/dpkg", "ELF dpkg"), d("usr/local"), d("usr/local/bin"),
        d("var"), d("var/lib"), d("var/lib/dpkg"), f("var/lib/dpkg/status", "Package: base-files\nPackage: bash\n"),
    )


def _ubuntu_history(version: str) -> tuple[tuple[str, bool], ...]:
    return (
        ("/bin/sh -c #(nop)  ARG RELEASE", True),
        ("/bin/sh -c #(nop)  ARG LAUNCHPAD_BUILD_ARCH", True),
        ("/bin/sh -c #(nop)  LABEL org.opencontainers.image.ref.name=ubuntu", True),
        (f"/bin/sh -c #(nop)  LABEL org.opencontainers.image.version={version}", True),
        ("/bin/sh -c #(nop) ADD file:3a7ba0bfc57e3ae1b3a6e6f6e2f5d4e5e1b8c0f3f0e9a2a3b4c5d6e7f8091a2b in / ", False),
        ('/bin/sh -c #(nop)  CMD ["/bin/bash"]', True),
    )


def ubuntu_like() -> FixtureSpec:
    return FixtureSpec("ubuntu-like", "ubuntu:20.04", (_ubuntu_base("20.04", "focal"),),
                       _ubuntu_history("20.04"), command=("/bin/bash",), target_prefix="usr/bin")


def ubuntu_base_like() -> FixtureSpec:
    return FixtureSpec("ubuntu-base-like", "ubuntu:24.04", (_ubuntu_base("24.04", "noble"),),
                       _ubuntu_history("24.04"), command=("/bin/bash",), target_prefix="usr/bin")


def httpd_like() -> FixtureSpec:
    layers = (
        _debian_base(),
        (d("usr/local/apache2"), d("usr/local/apache2/bin"),),
        (d("usr/lib/x86_64-linux-gnu"), f("usr/lib/x86_64-linux-gnu/libapr-1.so.0", "ELF libapr"),
         f("usr/lib/x86_64-linux-gnu/libaprutil-1.so.0", "ELF libaprutil")),
        (d("usr/local/apache2/bin"), x("usr/local/apache2/bin/httpd", "ELF Apache/2.4.62"),
         x("usr/local/apache2/bin/apachectl", "#!/bin/sh\n"),
         d("usr/local/apache2/conf"), f("usr/local/apache2/conf/httpd.conf", "Listen 80\n"),
         d("usr/local/apache2/htdocs"), f("usr/local/apache2/htdocs/index.html", "<html><body><h1>It works!</h1>\n")),
        (d("usr/local/bin"), x("usr/local/bin/httpd-foreground", "#!/bin/sh\nset -e\nexec httpd -DFOREGROUND \"$@\"\n")),
    )
    history = (
        (_ADD_DEBIAN, False), _DEBIAN_CMD,
        ("ENV HTTPD_PREFIX=/usr/local/apache2", True),
        ("ENV PATH=/usr/local/apache2/bin:/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin", True),
        ('RUN /bin/sh -c mkdir -p "$HTTPD_PREFIX" && chown www-data:www-data "$HTTPD_PREFIX" # buildkit', False),
        ("WORKDIR /usr/local/apache2", True),
        ("RUN /bin/sh -c set -eux; apt-get install -y libapr1 libaprutil1 # buildkit", False),
        ("ENV HTTPD_VERSION=2.4.62", True),
        ("RUN /bin/sh -c set -eux; ./configure --prefix=\"$HTTPD_PREFIX\"; make install # buildkit", False),
        ("STOPSIGNAL SIGWINCH", True),
        ("COPY httpd-foreground /usr/local/bin/ # buildkit", False),
        ("EXPOSE map[80/tcp:{}]", True),
        ('CMD ["httpd-foreground"]', True),
    )
    return FixtureSpec("httpd-like", "httpd:2.4", layers, history, command=("httpd-foreground",),
                       env=("PATH=/usr/local/apache2/bin:/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin",
                            "HTTPD_PREFIX=/usr/local/apache2", "HTTPD_VERSION=2.4.62"),
                       working_dir="/usr/local/apache2", target_prefix="usr/local/bin")


def nginx_like() -> FixtureSpec:
    layers = (
        _debian_base(),
        (d("usr/sbin"), x("usr/sbin/nginx", "ELF nginx/1.27.1"), d("etc/nginx"),
         f("etc/nginx/nginx.conf", "user nginx;\nworker_processes auto;\n"),
         d("etc/nginx/conf.d"), f("etc/nginx/conf.d/default.conf", "server { listen 80; }\n"),
         d("usr/share/nginx"), d("usr/share/nginx/html"),
         f("usr/share/nginx/html/index.html", "<h1>Welcome to nginx!</h1>\n"),
         d("var/log/nginx"), ln("var/log/nginx/access.log", "/dev/stdout"),
         ln("var/log/nginx/error.log", "/dev/stderr")),
        (x("docker-entrypoint.sh", "#!/bin/sh\nset -e\nexec \"$@\"\n"),),
        (d("docker-entrypoint.d"),
         x("docker-entrypoint.d/10-listen-on-ipv6-by-default.sh", "#!/bin/sh\n")),
        (d("docker-entrypoint.d"), x("docker-entrypoint.d/20-envsubst-on-templates.sh", "#!/bin/sh\n")),
    )
    history = (
        (_ADD_DEBIAN, False), _DEBIAN_CMD,
        ("LABEL maintainer=NGINX Docker Maintainers <docker-maint@nginx.com>", True),
        ("ENV NGINX_VERSION=1.27.1", True),
        ("RUN /bin/sh -c set -x && groupadd --system nginx && apt-get install nginx=${NGINX_VERSION} "
         "&& ln -sf /dev/stdout /var/log/nginx/access.log # buildkit", False),
        ("COPY docker-entrypoint.sh / # buildkit", False),
        ("COPY 10-listen-on-ipv6-by-default.sh /docker-entrypoint.d # buildkit", False),
        ("COPY 20-envsubst-on-templates.sh /docker-entrypoint.d # buildkit", False),
        ('ENTRYPOINT ["/docker-entrypoint.sh" "nginx"]', True),
        ("EXPOSE map[80/tcp:{}]", True),
        ("STOPSIGNAL SIGQUIT", True),
        ('CMD ["-g" "daemon off;"]', True),
    )
    return FixtureSpec("nginx-like", "nginx:1.27", layers, history,
                       entrypoint=("/docker-entrypoint.sh", "nginx"), command=("-g", "daemon off;"),
                       env=("PATH=/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin",
                            "NGINX_VERSION=1.27.1"),
                       target_prefix="usr/sbin")


def node_like() -> FixtureSpec:
    layers = (
        _debian_base(),
        (d("usr/local/bin"), x("usr/local/bin/node", "ELF node v20.17.0"),
         ln("usr/local/bin/npm", "../lib/node_modules/npm/bin/npm-cli.js"),
         ln("usr/local/bin/npx", "../lib/node_modules/npm/bin/npx-cli.js"),
         d("usr/local/lib/node_modules"), d("usr/local/lib/node_modules/npm"),
         f("usr/local/lib/node_modules/npm/package.json", '{"name":"npm","version":"10.8.2"}\n')),
        (d("opt"), d("opt/yarn-v1.22.22"), x("opt/yarn-v1.22.22/bin/yarn", "#!/usr/bin/env node\n"),
         d("usr/local/bin"), ln("usr/local/bin/yarn", "/opt/yarn-v1.22.22/bin/yarn")),
        (d("usr/local/bin"), x("usr/local/bin/docker-entrypoint.sh", "#!/bin/sh\nset -e\nexec \"$@\"\n")),
    )
    history = (
        (_ADD_DEBIAN, False), _DEBIAN_CMD,
        ("ENV NODE_VERSION=20.17.0", True),
        ("RUN /bin/sh -c set -ex && curl -fsSLO node-v$NODE_VERSION-linux-x64.tar.xz && tar -xJf ... "
         "-C /usr/local # buildkit", False),
        ("ENV YARN_VERSION=1.22.22", True),
        ("RUN /bin/sh -c set -ex && curl -fsSLO yarn-v$YARN_VERSION.tar.gz && ln -s ... /usr/local/bin/yarn "
         "# buildkit", False),
        ("COPY docker-entrypoint.sh /usr/local/bin/ # buildkit", False),
        ('ENTRYPOINT ["docker-entrypoint.sh"]', True),
        ('CMD ["node"]', True),
    )
    return FixtureSpec("node-like", "node:20", layers, history,
                       entrypoint=("docker-entrypoint.sh",), command=("node",),
                       env=("PATH=/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin",
                            "NODE_VERSION=20.17.0", "YARN_VERSION=1.22.22"))


def postgres_like() -> FixtureSpec:
    layers = (
        _debian_base(),
        (f("etc/passwd", "root:x:0:0:root:/root:/bin/bash\npostgres:x:999:999::/var/lib/postgresql:/bin/bash\n"),
         f("etc/group", "root:x:0:\npostgres:x:999:\n")),
        (d("usr/local/bin"), x("usr/local/bin/gosu", "ELF gosu 1.17")),
        (d("usr/lib/locale"), f("usr/lib/locale/locale-archive", "locales en_US.UTF-8\n")),
        (d("usr/lib/postgresql"), d("usr/lib/postgresql/16"), d("usr/lib/postgresql/16/bin"),
         x("usr/lib/postgresql/16/bin/postgres", "ELF PostgreSQL 16.4"),
         x("usr/lib/postgresql/16/bin/initdb", "ELF initdb 16.4")),
        (d("var/run/postgresql", 0o2777),),
        (d("usr/local/bin"), x("usr/local/bin/docker-entrypoint.sh", "#!/usr/bin/env bash\nset -Eeo pipefail\n"),
         x("usr/local/bin/docker-ensure-initdb.sh", "#!/usr/bin/env bash\n")),
    )
    history = (
        (_ADD_DEBIAN, False), _DEBIAN_CMD,
        ("RUN /bin/sh -c set -eux; groupadd -r postgres --gid=999; useradd -r -g postgres --uid=999 postgres "
         "# buildkit", False),
        ("ENV GOSU_VERSION=1.17", True),
        ("RUN /bin/sh -c set -eux; wget -O /usr/local/bin/gosu ...; chmod +x /usr/local/bin/gosu # buildkit", False),
        ("RUN /bin/sh -c set -eux; localedef -i en_US -c -f UTF-8 en_US.UTF-8 # buildkit", False),
        ("ENV PG_MAJOR=16", True),
        ("RUN /bin/sh -c set -ex; apt-get install -y postgresql-common postgresql-$PG_MAJOR # buildkit", False),
        ("RUN /bin/sh -c install --verbose --directory --owner postgres --group postgres --mode 3777 "
         "/var/run/postgresql # buildkit", False),
        ("COPY docker-entrypoint.sh docker-ensure-initdb.sh /usr/local/bin/ # buildkit", False),
        ('ENTRYPOINT ["docker-entrypoint.sh"]', True),
        ("STOPSIGNAL SIGINT", True),
        ("EXPOSE map[5432/tcp:{}]", True),
        ('CMD ["postgres"]', True),
    )
    return FixtureSpec("postgres-like", "postgres:16", layers, history,
                       entrypoint=("docker-entrypoint.sh",), command=("postgres",),
                       env=("PATH=/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin:/usr/lib/postgresql/16/bin",
                            "GOSU_VERSION=1.17", "PG_MAJOR=16", "PGDATA=/var/lib/postgresql/data"))


def ubi_like() -> FixtureSpec:
    layers = (
        (d("etc"), f("etc/redhat-release", "Red Hat Enterprise Linux release 9.4 (Plow)\n"),
         f("etc/os-release", 'NAME="Red Hat Enterprise Linux"\nVERSION_ID="9.4"\n'),
         ln("bin", "usr/bin"), ln("lib64", "usr/lib64"),
         d("usr"), d("usr/bin"), x("usr/bin/bash", "ELF bash 5.1 el9"), x("usr/bin/dnf", "#!/usr/bin/python3\n"),
         x("usr/bin/rpm", "ELF rpm 4.16"), d("usr/lib64"), f("usr/lib64/libc.so.6", "ELF glibc 2.34 el9"),
         d("var"), d("var/lib"), d("var/lib/rpm"), f("var/lib/rpm/rpmdb.sqlite", "SQLite format 3\n")),
        (d("etc"), d("etc/yum.repos.d"), f("etc/yum.repos.d/ubi.repo", "[ubi-9-baseos-rpms]\n"),
         d("root"), d("root/buildinfo"), f("root/buildinfo/Dockerfile-ubi9-9.4", "FROM scratch\n")),
    )
    history = (
        ("/bin/sh -c #(nop) ADD file:6e5766a8dd7ac3d5b9cdd21be1b1d4d6a80e9cbac6b40d1f7ad4c1a6e5e9a8c5 in / ", False),
        ("/bin/sh -c #(nop) LABEL maintainer=\"Red Hat, Inc.\" vendor=\"Red Hat, Inc.\"", True),
        ("/bin/sh -c #(nop) COPY file:ubi.repo in /etc/yum.repos.d/ubi.repo ", False),
        ('/bin/sh -c #(nop) CMD ["/bin/bash"]', True),
    )
    return FixtureSpec("ubi-like", "registry.access.redhat.com/ubi9:9.4", layers, history,
                       command=("/bin/bash",), env=("container=oci",
                                                    "PATH=/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin"),
                       target_prefix="usr/bin")


def redis_like() -> FixtureSpec:
    layers = (
        _debian_base(),
        (f("etc/passwd", "root:x:0:0:root:/root:/bin/bash\nredis:x:999:999::/home/redis:/usr/sbin/nologin\n"),
         f("etc/group", "root:x:0:\nredis:x:999:\n")),
        (d("usr/local/bin"), x("usr/local/bin/gosu", "ELF gosu 1.17 (redis)")),
        (d("usr/local/bin"), x("usr/local/bin/redis-server", "ELF Redis 7.4.0"),
         x("usr/local/bin/redis-cli", "ELF redis-cli 7.4.0"),
         ln("usr/local/bin/redis-sentinel", "redis-server"),
         ln("usr/local/bin/redis-check-aof", "redis-server")),
        (d("data", 0o755),),
        (d("usr/local/bin"), x("usr/local/bin/docker-entrypoint.sh", "#!/bin/sh\nset -e\n")),
    )
    history = (
        (_ADD_DEBIAN, False), _DEBIAN_CMD,
        ("RUN /bin/sh -c set -eux; groupadd -r -g 999 redis; useradd -r -g redis -u 999 redis # buildkit", False),
        ("ENV GOSU_VERSION=1.17", True),
        ("RUN /bin/sh -c set -eux; wget -O /usr/local/bin/gosu ... # buildkit", False),
        ("ENV REDIS_VERSION=7.4.0", True),
        ("RUN /bin/sh -c set -eux; make -C /usr/src/redis install # buildkit", False),
        ("RUN /bin/sh -c mkdir /data && chown redis:redis /data # buildkit", False),
        ("VOLUME [/data]", True),
        ("WORKDIR /data", True),
        ("COPY docker-entrypoint.sh /usr/local/bin/ # buildkit", False),
        ('ENTRYPOINT ["docker-entrypoint.sh"]', True),
        ("EXPOSE map[6379/tcp:{}]", True),
        ('CMD ["redis-server"]', True),
    )
    return FixtureSpec("redis-like", "redis:7.4", layers, history,
                       entrypoint=("docker-entrypoint.sh",), command=("redis-server",),
                       env=("PATH=/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin",
                            "GOSU_VERSION=1.17", "REDIS_VERSION=7.4.0"),
                       working_dir="/data")


# Base images the automated attack is exercised against.
BASE_IMAGE_ANALOGUES = ("httpd-like", "nginx-like", "node-like", "postgres-like",
                        "ubi-like", "redis-like", "ubuntu-base-like")

_SPECS = {
    "python-like": python_like,
    "alpine-like": alpine_like,
    "ubuntu-like": ubuntu_like,
    "httpd-like": httpd_like,
    "nginx-like": nginx_like,
    "node-like": node_like,
    "postgres-like": postgres_like,
    "ubi-like": ubi_like,
    "redis-like": redis_like,
    "ubuntu-base-like": ubuntu_base_like,
}


def fixture_names() -> list[str]:
    return list(_SPECS)


def fixture_spec(name: str) -> FixtureSpec:
    try:
        return _SPECS[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(_SPECS)}") from None


def canned_fixtures() -> dict[str, ImageArchive]:
    return {name: build_fixture(factory()) for name, factory in _SPECS.items()}
