from config import run_analysis


if __name__ == "__main__":
    run_analysis()
