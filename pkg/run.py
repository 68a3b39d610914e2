from roa_forge import create_app

app = create_app()

if __name__ == '__main__':
    app(prog_name='roa-forge')
