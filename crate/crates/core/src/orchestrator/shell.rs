//! Restricted shell over the simulated cluster.
//!
//! Only the commands listed in [`SHELL_HELP`] are interpreted; anything else
//! is refused. Every mutation is applied as [`Actor::Agent`].

use std::collections::BTreeMap;
use std::fs;

use crate::telemetry::TelemetryStore;
use crate::topology::{conn_config_map, Actor, ClusterState, PodPhase, PodState, StateError, PASSWORD_KEY};

use super::workspace::{Workspace, VIRTUAL_ROOT};

pub const SHELL_HELP: &str = "\
kubectl get pods|services|deployments|configmaps -n NS
kubectl describe service|pod|deployment|configmap NAME -n NS
kubectl logs POD -n NS
kubectl scale deployment NAME --replicas=N -n NS
kubectl patch service NAME -n NS --target-port=P
kubectl patch deployment NAME -n NS --clear-node-selector
kubectl set image deployment NAME TAG -n NS
kubectl rollout restart deployment NAME -n NS
kubectl delete pod NAME -n NS
kubectl edit configmap NAME set KEY=VALUE -n NS
mongo show-users --store S
mongo grant-role --store S --principal P --role R
mongo register-user --store S --user U
cat PATH | ls [PATH]      (read-only, under /arena/telemetry)";

const FORBIDDEN_CHARS: &[char] = &[';', '|', '&', '>', '<', '`', '$', '\n', '\r'];
const VALUE_FLAGS: &[&str] = &["n", "namespace", "replicas", "target-port", "store", "principal", "role", "user"];
const MAX_REPLICAS: i64 = 100;

fn refusal(cmd: &str) -> String {
    format!(
        "Permission denied: `{cmd}` is not allowed by the security policy.\nAllowed commands:\n{SHELL_HELP}"
    )
}

fn usage(form: &str) -> String {
    format!("error: invalid arguments\nUsage: {form}")
}

struct Args {
    pos: Vec<String>,
    flags: BTreeMap<String, String>,
}

impl Args {
    fn parse(tokens: &[String]) -> Result<Self, String> {
        let mut pos = Vec::new();
        let mut flags = BTreeMap::new();
        let mut it = tokens.iter().peekable();
        while let Some(t) = it.next() {
            let Some(stripped) = t.strip_prefix("--").or_else(|| t.strip_prefix('-').filter(|s| !s.is_empty())) else {
                pos.push(t.clone());
                continue;
            };
            let (key, inline) = match stripped.split_once('=') {
                Some((k, v)) => (k.to_string(), Some(v.to_string())),
                None => (stripped.to_string(), None),
            };
            let value = match inline {
                Some(v) => v,
                None if VALUE_FLAGS.contains(&key.as_str()) => {
                    it.next().cloned().ok_or_else(|| format!("error: flag needs an argument: --{key}"))?
                }
                None => String::new(),
            };
            let key = if key == "n" { "namespace".to_string() } else { key };
            flags.insert(key, value);
        }
        Ok(Self { pos, flags })
    }

    fn ns(&self) -> &str {
        self.flags.get("namespace").map_or("default", String::as_str)
    }

    fn flag(&self, k: &str) -> Option<&str> {
        self.flags.get(k).map(String::as_str)
    }
}

/// `deployment/foo` or `deployment foo`.
fn kind_and_name(pos: &[String], at: usize) -> (Option<String>, Option<String>) {
    match pos.get(at) {
        Some(k) if k.contains('/') => {
            let (k, n) = k.split_once('/').unwrap();
            (Some(k.to_string()), Some(n.to_string()))
        }
        Some(k) => (Some(k.clone()), pos.get(at + 1).cloned()),
        None => (None, None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Pod,
    Service,
    Deployment,
    ConfigMap,
}

fn kind(s: &str) -> Option<Kind> {
    match s {
        "pod" | "pods" | "po" => Some(Kind::Pod),
        "service" | "services" | "svc" => Some(Kind::Service),
        "deployment" | "deployments" | "deploy" | "deployment.apps" => Some(Kind::Deployment),
        "configmap" | "configmaps" | "cm" => Some(Kind::ConfigMap),
        _ => None,
    }
}

fn not_found(kind: &str, name: &str) -> String {
    format!("Error from server (NotFound): {kind} \"{name}\" not found")
}

fn age(now_ms: u64, created_ms: u64) -> String {
    let s = now_ms.saturating_sub(created_ms) / 1000;
    match s {
        0..=119 => format!("{s}s"),
        120..=7199 => format!("{}m", s / 60),
        _ => format!("{}h", s / 3600),
    }
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            if c + 1 == r.len() {
                line.push_str(cell);
            } else {
                line.push_str(&format!("{cell:<w$}   ", w = widths[c]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100000001b3))
}

fn cluster_ip(name: &str) -> String {
    let h = fnv(name);
    format!("10.96.{}.{}", (h >> 8) % 256, h % 254 + 1)
}

fn pod_ip(pod: &PodState) -> String {
    let h = fnv(&pod.pod_name);
    format!("10.244.{}.{}", (h >> 8) % 256, h % 254 + 1)
}

fn ready(p: &PodState) -> &'static str {
    if p.phase == PodPhase::Running {
        "1/1"
    } else {
        "0/1"
    }
}

fn state_err(e: StateError) -> String {
    match e {
        StateError::UnknownNamespace(n) => not_found("namespaces", &n),
        StateError::UnknownService(n) => not_found("deployments.apps", &n),
        StateError::UnknownPod(n) => not_found("pods", &n),
        StateError::UnknownConfigMap(n) => not_found("configmaps", &n),
        StateError::UnknownStore(n) => format!("MongoServerError: store {n} not found"),
        StateError::UnknownPrincipal(n) => format!("MongoServerError: user {n} not found"),
    }
}

/// Short verb used for action accounting, e.g. "kubectl get".
pub fn shell_verb(command: &str) -> String {
    let toks = shlex::split(command).unwrap_or_default();
    match toks.first().map(String::as_str) {
        Some(p @ ("kubectl" | "mongo")) => match toks.get(1) {
            Some(v) => format!("{p} {v}"),
            None => p.to_string(),
        },
        Some(other) => other.to_string(),
        None => "empty".to_string(),
    }
}

pub struct Shell<'a> {
    pub state: &'a mut ClusterState,
    pub telemetry: &'a TelemetryStore,
    pub workspace: &'a Workspace,
}

impl Shell<'_> {
    pub fn run(&mut self, command: &str) -> String {
        let cmd = command.trim();
        if cmd.is_empty() {
            return usage("exec_shell(\"<command>\")");
        }
        if cmd.contains(FORBIDDEN_CHARS) {
            return refusal(cmd);
        }
        let Some(tokens) = shlex::split(cmd) else { return "error: unbalanced quotes".to_string() };
        let args = match Args::parse(&tokens[1..]) {
            Ok(a) => a,
            Err(e) => return e,
        };
        match tokens[0].as_str() {
            "kubectl" => self.kubectl(cmd, &args),
            "mongo" => self.mongo(cmd, &args),
            "cat" => self.cat(&args),
            "ls" => self.ls(&args),
            _ => refusal(cmd),
        }
    }

    fn kubectl(&mut self, cmd: &str, a: &Args) -> String {
        let verb = a.pos.first().map(String::as_str).unwrap_or("");
        match verb {
            "get" => self.get(a),
            "describe" => self.describe(a),
            "logs" => self.logs(a),
            "scale" => self.scale(a),
            "patch" => self.patch(a),
            "set" => self.set_image(a),
            "rollout" => self.rollout(a),
            "delete" => self.delete(a),
            "edit" => self.edit(a),
            "" => usage("kubectl <verb> ..."),
            _ => refusal(cmd),
        }
    }

    fn get(&self, a: &Args) -> String {
        let Some(k) = a.pos.get(1).and_then(|k| kind(k)) else {
            return usage("kubectl get pods|services|deployments|configmaps -n NS");
        };
        let ns = a.ns();
        let now = self.state.now_ms();
        let Ok(services) = self.state.services(ns) else {
            return format!("No resources found in {ns} namespace.");
        };
        let services: Vec<_> = services.collect();
        let mut rows = Vec::new();
        match k {
            Kind::Pod => {
                rows.push(["NAME", "READY", "STATUS", "RESTARTS", "AGE", "NODE"].map(String::from).to_vec());
                let mut pods: Vec<&PodState> = self.state.pods(ns).map(|p| p.iter().collect()).unwrap_or_default();
                pods.sort_by(|x, y| x.pod_name.cmp(&y.pod_name));
                for p in pods {
                    rows.push(vec![
                        p.pod_name.clone(),
                        ready(p).to_string(),
                        p.phase.to_string(),
                        p.restart_count.to_string(),
                        age(now, p.created_ms),
                        p.node.clone().unwrap_or_else(|| "<none>".into()),
                    ]);
                }
            }
            Kind::Service => {
                rows.push(["NAME", "TYPE", "CLUSTER-IP", "EXTERNAL-IP", "PORT(S)"].map(String::from).to_vec());
                for s in &services {
                    rows.push(vec![
                        s.name.clone(),
                        "ClusterIP".into(),
                        cluster_ip(&s.name),
                        "<none>".into(),
                        format!("{}/TCP", s.container_port),
                    ]);
                }
            }
            Kind::Deployment => {
                rows.push(["NAME", "READY", "UP-TO-DATE", "AVAILABLE"].map(String::from).to_vec());
                for s in &services {
                    let running = self.state.running_pods(ns, &s.name);
                    rows.push(vec![
                        s.name.clone(),
                        format!("{running}/{}", s.desired_replicas),
                        s.desired_replicas.to_string(),
                        running.to_string(),
                    ]);
                }
            }
            Kind::ConfigMap => {
                rows.push(["NAME", "DATA"].map(String::from).to_vec());
                if let Ok(cms) = self.state.config_maps(ns) {
                    for (name, kv) in cms {
                        rows.push(vec![name.clone(), kv.len().to_string()]);
                    }
                }
            }
        }
        if rows.len() == 1 {
            return format!("No resources found in {ns} namespace.");
        }
        table(&rows)
    }

    fn describe(&self, a: &Args) -> String {
        let form = "kubectl describe service|pod|deployment|configmap NAME -n NS";
        let (Some(k), Some(name)) = kind_and_name(&a.pos, 1) else { return usage(form) };
        let Some(k) = kind(&k) else { return usage(form) };
        let ns = a.ns();
        let st = &*self.state;
        match k {
            Kind::Service => {
                let Ok(s) = st.service(ns, &name) else { return not_found("services", &name) };
                let eps: Vec<String> = st
                    .pods_of(ns, &s.name)
                    .filter(|p| p.phase == PodPhase::Running)
                    .map(|p| format!("{}:{}", pod_ip(p), s.svc_target_port))
                    .collect();
                format!(
                    "Name:              {}\nNamespace:         {ns}\nSelector:          app={}\nType:              ClusterIP\n\
                     IP:                {}\nPort:              <unset>  {}/TCP\nTargetPort:        {}/TCP\n\
                     Endpoints:         {}\n",
                    s.name,
                    s.name,
                    cluster_ip(&s.name),
                    s.container_port,
                    s.svc_target_port,
                    if eps.is_empty() { "<none>".to_string() } else { eps.join(",") }
                )
            }
            Kind::Deployment => {
                let Ok(s) = st.service(ns, &name) else { return not_found("deployments.apps", &name) };
                let running = st.running_pods(ns, &s.name);
                let total = st.pods_of(ns, &s.name).count();
                format!(
                    "Name:               {}\nNamespace:          {ns}\nReplicas:           {} desired | {} total | {} available | {} unavailable\n\
                     Image:              {}\nPort:               {}/TCP\nNode-Selectors:     {}\n",
                    s.name,
                    s.desired_replicas,
                    total,
                    running,
                    total - running,
                    s.image_tag,
                    s.container_port,
                    s.node_selector.as_ref().map_or("<none>".to_string(), |n| format!("kubernetes.io/hostname={n}"))
                )
            }
            Kind::Pod => {
                let Ok(p) = st.pod(ns, &name) else { return not_found("pods", &name) };
                let Ok(s) = st.service(ns, &p.service) else { return not_found("pods", &name) };
                let mut env = String::new();
                for (k, v) in &p.env {
                    let shown = if k == PASSWORD_KEY { "<set>" } else { v.as_str() };
                    env.push_str(&format!("      {k}:  {shown}\n"));
                }
                if let Some(auth) = &s.requires_auth {
                    if !p.env.contains_key(PASSWORD_KEY) {
                        env.push_str(&format!(
                            "      {PASSWORD_KEY}:  <unset>  (from configmap {})\n",
                            conn_config_map(&auth.store)
                        ));
                    }
                }
                if env.is_empty() {
                    env.push_str("      <none>\n");
                }
                let events = match p.phase {
                    PodPhase::Pending => format!(
                        "  Warning  FailedScheduling  0/{n} nodes are available: {n} node(s) didn't match Pod's node affinity/selector.\n",
                        n = st.nodes().len()
                    ),
                    PodPhase::Failed => "  Warning  BackOff  container exited with non-zero status\n".to_string(),
                    PodPhase::CrashLoopBackOff => "  Warning  BackOff  Back-off restarting failed container\n".to_string(),
                    PodPhase::Running => "  <none>\n".to_string(),
                };
                format!(
                    "Name:             {}\nNamespace:        {ns}\nNode:             {}\nStatus:           {}\nIP:               {}\n\
                     Controlled By:    ReplicaSet/{}\nImage:            {}\nRestart Count:    {}\nNode-Selectors:   {}\n\
                     Environment:\n{env}Events:\n{events}",
                    p.pod_name,
                    p.node.as_deref().unwrap_or("<none>"),
                    p.phase,
                    if p.node.is_some() { pod_ip(p) } else { "<none>".to_string() },
                    p.service,
                    s.image_tag,
                    p.restart_count,
                    s.node_selector.as_ref().map_or("<none>".to_string(), |n| format!("kubernetes.io/hostname={n}"))
                )
            }
            Kind::ConfigMap => {
                let Ok(cm) = st.config_map(ns, &name) else { return not_found("configmaps", &name) };
                let mut out = format!("Name:         {name}\nNamespace:    {ns}\n\nData\n====\n");
                for (k, v) in cm {
                    out.push_str(&format!("{k}:\n----\n{v}\n\n"));
                }
                out
            }
        }
    }

    fn logs(&self, a: &Args) -> String {
        let Some(pod) = a.pos.get(1) else { return usage("kubectl logs POD -n NS") };
        match self.state.pod(a.ns(), pod) {
            Ok(_) => self.telemetry.pod_logs(pod),
            Err(_) => not_found("pods", pod),
        }
    }

    fn scale(&mut self, a: &Args) -> String {
        let form = "kubectl scale deployment NAME --replicas=N -n NS";
        let (Some(k), Some(name)) = kind_and_name(&a.pos, 1) else { return usage(form) };
        if kind(&k) != Some(Kind::Deployment) {
            return usage(form);
        }
        let Some(n) = a.flag("replicas").and_then(|r| r.parse::<i64>().ok()) else { return usage(form) };
        if !(0..=MAX_REPLICAS).contains(&n) {
            return format!("error: replicas must be between 0 and {MAX_REPLICAS}");
        }
        match self.state.scale(Actor::Agent, a.ns(), &name, n as u32) {
            Ok(()) => format!("deployment.apps/{name} scaled"),
            Err(e) => state_err(e),
        }
    }

    fn patch(&mut self, a: &Args) -> String {
        let form = "kubectl patch service NAME -n NS --target-port=P | kubectl patch deployment NAME -n NS --clear-node-selector";
        let (Some(k), Some(name)) = kind_and_name(&a.pos, 1) else { return usage(form) };
        let ns = a.ns().to_string();
        match kind(&k) {
            Some(Kind::Service) => {
                let Some(port) = a.flag("target-port").and_then(|p| p.parse::<u16>().ok()) else { return usage(form) };
                if self.state.service(&ns, &name).is_err() {
                    return not_found("services", &name);
                }
                match self.state.patch_target_port(Actor::Agent, &ns, &name, port) {
                    Ok(()) => format!("service/{name} patched"),
                    Err(e) => state_err(e),
                }
            }
            Some(Kind::Deployment) if a.flags.contains_key("clear-node-selector") => {
                match self.state.set_node_selector(Actor::Agent, &ns, &name, None) {
                    Ok(()) => format!("deployment.apps/{name} patched"),
                    Err(e) => state_err(e),
                }
            }
            _ => usage(form),
        }
    }

    fn set_image(&mut self, a: &Args) -> String {
        let form = "kubectl set image deployment NAME TAG -n NS";
        if a.pos.get(1).map(String::as_str) != Some("image") {
            return usage(form);
        }
        let (Some(k), Some(name)) = kind_and_name(&a.pos, 2) else { return usage(form) };
        if kind(&k) != Some(Kind::Deployment) {
            return usage(form);
        }
        let tag_at = if a.pos[2].contains('/') { 3 } else { 4 };
        let Some(tag) = a.pos.get(tag_at) else { return usage(form) };
        // Accept the kubectl form CONTAINER=IMAGE too.
        let tag = tag.split_once('=').map_or(tag.as_str(), |(_, t)| t);
        if tag.is_empty() {
            return usage(form);
        }
        match self.state.set_image(Actor::Agent, a.ns(), &name, tag) {
            Ok(()) => format!("deployment.apps/{name} image updated"),
            Err(e) => state_err(e),
        }
    }

    fn rollout(&mut self, a: &Args) -> String {
        let form = "kubectl rollout restart deployment NAME -n NS";
        if a.pos.get(1).map(String::as_str) != Some("restart") {
            return usage(form);
        }
        let (Some(k), Some(name)) = kind_and_name(&a.pos, 2) else { return usage(form) };
        if kind(&k) != Some(Kind::Deployment) {
            return usage(form);
        }
        match self.state.restart_pods(Actor::Agent, a.ns(), &name) {
            Ok(()) => format!("deployment.apps/{name} restarted"),
            Err(e) => state_err(e),
        }
    }

    fn delete(&mut self, a: &Args) -> String {
        let form = "kubectl delete pod NAME -n NS";
        let (Some(k), Some(name)) = kind_and_name(&a.pos, 1) else { return usage(form) };
        if kind(&k) != Some(Kind::Pod) {
            return usage(form);
        }
        match self.state.delete_pod(Actor::Agent, a.ns(), &name) {
            Ok(()) => format!("pod \"{name}\" deleted"),
            Err(e) => state_err(e),
        }
    }

    fn edit(&mut self, a: &Args) -> String {
        let form = "kubectl edit configmap NAME set KEY=VALUE -n NS";
        let (Some(k), Some(name)) = kind_and_name(&a.pos, 1) else { return usage(form) };
        if kind(&k) != Some(Kind::ConfigMap) {
            return usage(form);
        }
        let at = if a.pos[1].contains('/') { 2 } else { 3 };
        if a.pos.get(at).map(String::as_str) != Some("set") {
            return usage(form);
        }
        let Some((key, value)) = a.pos.get(at + 1).and_then(|kv| kv.split_once('=')) else { return usage(form) };
        if key.is_empty() {
            return usage(form);
        }
        match self.state.set_config_value(Actor::Agent, a.ns(), &name, key, value) {
            Ok(()) => format!("configmap/{name} edited"),
            Err(e) => state_err(e),
        }
    }

    fn mongo(&mut self, cmd: &str, a: &Args) -> String {
        let store = a.flag("store").unwrap_or("");
        let ok = "{ \"ok\" : 1 }".to_string();
        match a.pos.first().map(String::as_str) {
            Some("show-users") => match self.state.auth_store(store) {
                Ok(s) => {
                    let mut out = String::new();
                    for (p, roles) in &s.principals {
                        let registered = s.registered_users.contains(p);
                        let roles: Vec<&str> = roles.iter().map(String::as_str).collect();
                        out.push_str(&format!(
                            "{{ \"user\" : \"{p}\", \"registered\" : {registered}, \"roles\" : [{}] }}\n",
                            roles.iter().map(|r| format!("\"{r}\"")).collect::<Vec<_>>().join(", ")
                        ));
                    }
                    for u in s.registered_users.iter().filter(|u| !s.principals.contains_key(*u)) {
                        out.push_str(&format!("{{ \"user\" : \"{u}\", \"registered\" : true, \"roles\" : [] }}\n"));
                    }
                    if out.is_empty() {
                        out.push_str("[ ]\n");
                    }
                    out
                }
                Err(e) => state_err(e),
            },
            Some("grant-role") => {
                let (Some(p), Some(r)) = (a.flag("principal"), a.flag("role")) else {
                    return usage("mongo grant-role --store S --principal P --role R");
                };
                match self.state.grant_role(Actor::Agent, store, p, r) {
                    Ok(()) => ok,
                    Err(e) => state_err(e),
                }
            }
            Some("register-user") => {
                let Some(u) = a.flag("user") else { return usage("mongo register-user --store S --user U") };
                match self.state.register_user(Actor::Agent, store, u) {
                    Ok(()) => ok,
                    Err(e) => state_err(e),
                }
            }
            None => usage("mongo show-users|grant-role|register-user --store S ..."),
            Some(_) => refusal(cmd),
        }
    }

    fn cat(&self, a: &Args) -> String {
        let Some(path) = a.pos.first() else { return usage("cat PATH") };
        let Some(real) = self.workspace.resolve(path) else {
            return format!("cat: {path}: Permission denied (only {VIRTUAL_ROOT} is readable)");
        };
        if real.is_dir() {
            return format!("cat: {path}: Is a directory");
        }
        match fs::read_to_string(&real) {
            Ok(s) => s,
            Err(_) => format!("cat: {path}: No such file or directory"),
        }
    }

    fn ls(&self, a: &Args) -> String {
        let path = a.pos.first().map_or(VIRTUAL_ROOT, String::as_str);
        let Some(real) = self.workspace.resolve(path) else {
            return format!("ls: cannot open directory '{path}': Permission denied");
        };
        if real.is_file() {
            return format!("{path}\n");
        }
        let Ok(rd) = fs::read_dir(&real) else {
            return format!("ls: cannot access '{path}': No such file or directory");
        };
        let mut names: Vec<String> = rd.filter_map(|e| e.ok()).map(|e| e.file_name().to_string_lossy().into_owned()).collect();
        names.sort();
        let mut out = names.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }
}
