import os
import tempfile

import streamlit as st

import chase
import cli
from graph_core import GraphError
from ggd_lang import GgdError, parse_ggds

try:
    import openpyxl  # noqa: F401
    WORKBOOK_AVAILABLE = True
except Exception:
    WORKBOOK_AVAILABLE = False


st.set_page_config(
    page_title="GGD workbench",
    page_icon="🕸️",
    layout="centered",
    initial_sidebar_state="collapsed",
)

st.title("GGD workbench")
st.write("Validate a property graph against graph generating dependencies, or reason about the dependencies alone.")

st.markdown(
    """
    <style>
      [data-testid="stSidebar"] { display: none !important; }
      [data-testid="collapsedControl"] { display: none !important; }
    </style>
    """,
    unsafe_allow_html=True,
)

LABELS = {
    "validate": "Validate graph",
    "sat": "Satisfiability",
    "implies": "Implication",
    "wacyclic": "Weak acyclicity",
}
NEEDS_GRAPH = {"validate"}


def _ggd_names(text: str):
    # parse errors are reported when the task runs
    try:
        return [ggd.name for ggd in parse_ggds(text)]
    except GgdError:
        return []


def main():
    command = st.selectbox("Task", list(LABELS), format_func=LABELS.get)
    ggd_text = st.text_area("GGDs", value=st.session_state.get("ggd_text", ""), height=260)
    st.session_state["ggd_text"] = ggd_text

    graph_path = ""
    if command in NEEDS_GRAPH:
        hint = "directory with vertices.csv and edges.csv"
        if WORKBOOK_AVAILABLE:
            hint += ", or an .xlsx workbook"
        graph_path = st.text_input("Graph", value="", help=hint)

    col1, col2 = st.columns(2)
    with col1:
        plan = st.radio("Validation plan", ["anti", "outer"], horizontal=True, disabled=command != "validate")
    with col2:
        cap = st.number_input("Chase step cap", min_value=1, value=chase.DEFAULT_STEP_CAP, step=100)

    target = None
    if command == "implies":
        names = _ggd_names(ggd_text)
        target = st.selectbox("GGD to test against the others", names) if names else None

    if not st.button("Run", type="primary"):
        return
    if not ggd_text.strip():
        st.warning("Enter at least one GGD.")
        return
    if command in NEEDS_GRAPH and not graph_path.strip():
        st.warning("Enter a graph location.")
        return

    with tempfile.TemporaryDirectory() as tmp:
        ggd_file = os.path.join(tmp, "ggds.ggd")
        with open(ggd_file, "w", encoding="utf-8") as fh:
            fh.write(ggd_text)
        cfg = cli.RunConfig(command=command, graph=graph_path.strip() or None, ggds=ggd_file,
                            ggd=target, plan=plan, cap=int(cap))
        try:
            code, document = cli.execute(cfg)
        except (cli.UsageError, GraphError, GgdError, ValueError, OSError) as e:
            st.error(str(e))
            return
        except Exception as e:
            st.error(f"{type(e).__name__}: {e}")
            return

    if code == cli.EXIT_OK:
        st.success("Holds")
    elif code == cli.EXIT_UNKNOWN:
        st.info("Unknown: the chase hit its step cap")
    else:
        st.error("Does not hold")
    st.code(document, language="json")
    st.download_button(
        label="Download result",
        data=document.encode("utf-8"),
        file_name=f"{command}.json",
        mime="application/json",
    )


main()
